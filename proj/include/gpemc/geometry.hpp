#pragma once

#include "gpemc/gp.hpp"
#include "gpemc/targets.hpp"

#include <atomic>
#include <memory>

namespace gpemc {

/// Local geometry at a point. Which fields are filled depends on the level
/// requested from the provider.
struct GeometryPoint {
  Vector gradient;        // grad U
  Matrix metric;          // G, symmetric positive definite
  Tensor3 dmetric;        // dmetric[k](i, j) = d G_ij / d theta_k
  Tensor3 christoffel;    // christoffel[m](i, j) = Gamma_{ij,m} (first kind)
};

enum class GeometryLevel { gradient = 0, metric = 1, full = 2 };

/// Source of grad U and Riemannian metric information for the samplers.
/// Potentials used in acceptance tests never come from here.
class GeometryProvider {
 public:
  virtual ~GeometryProvider() = default;
  virtual Index dim() const = 0;
  virtual bool has_metric() const = 0;
  virtual std::string name() const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
  /// Throws Unsupported when a metric level is requested without metric support.
  virtual GeometryPoint evaluate(const Vector& theta, GeometryLevel level) const = 0;
};

/// Gamma_{ij,m} = (d_i G_mj + d_j G_im - d_m G_ij) / 2.
Tensor3 christoffel_from_dmetric(const Tensor3& dmetric);
/// d_k G_ij = Gamma_{ik,j} + Gamma_{jk,i}.
Tensor3 dmetric_from_christoffel(const Tensor3& christoffel);

/// Geometry of the target itself. The metric is the target's analytic one.
class ExactGeometry final : public GeometryProvider {
 public:
  explicit ExactGeometry(std::shared_ptr<const TargetModel> target);

  Index dim() const override { return target_->dim(); }
  bool has_metric() const override { return target_->has_metric(); }
  std::string name() const override { return "exact"; }
  Vector gradient(const Vector& theta) const override;
  GeometryPoint evaluate(const Vector& theta, GeometryLevel level) const override;

 private:
  std::shared_ptr<const TargetModel> target_;
};

/// Emulated geometry: grad U from the GP emulator and the metric
///   G = eFI~ + prior_precision + lambda I,  lambda = reg * tr(eFI~) / D,
/// with its derivatives taken from the emulated Christoffel symbols.
class EmulatedGeometry final : public GeometryProvider {
 public:
  EmulatedGeometry(std::shared_ptr<const Emulator> emulator, Matrix prior_precision, double reg = 1e-6);

  Index dim() const override { return emulator_->dim(); }
  bool has_metric() const override { return emulator_->has_gfi(); }
  std::string name() const override { return "emulated"; }
  Vector gradient(const Vector& theta) const override;
  GeometryPoint evaluate(const Vector& theta, GeometryLevel level) const override;

  const Emulator& emulator() const { return *emulator_; }
  std::shared_ptr<const Emulator> emulator_ptr() const { return emulator_; }

 private:
  std::shared_ptr<const Emulator> emulator_;
  Matrix prior_precision_;
  double reg_;
};

/// Wraps a provider and counts and times gradient requests.
class InstrumentedGeometry final : public GeometryProvider {
 public:
  explicit InstrumentedGeometry(std::shared_ptr<const GeometryProvider> inner) : inner_(std::move(inner)) {}

  Index dim() const override { return inner_->dim(); }
  bool has_metric() const override { return inner_->has_metric(); }
  std::string name() const override { return inner_->name(); }
  Vector gradient(const Vector& theta) const override;
  GeometryPoint evaluate(const Vector& theta, GeometryLevel level) const override;

  long long calls() const { return calls_.load(); }
  long long nanoseconds() const { return ns_.load(); }
  void reset() { calls_ = 0; ns_ = 0; }

 private:
  std::shared_ptr<const GeometryProvider> inner_;
  mutable std::atomic<long long> calls_{0}, ns_{0};
};

}  // namespace gpemc
