#pragma once

#include "gpemc/core.hpp"
#include "gpemc/kernels.hpp"
#include "gpemc/rng.hpp"

#include <cstdint>
#include <string>

namespace gpemc {

/// Exact evaluation of a posterior potential U = -log posterior (up to a constant).
struct TargetEval {
  double potential = 0.0;
  Vector gradient;
  /// Likelihood term of each datum (length N). Empty unless requested.
  Vector per_datum_values;
  /// Column j is the gradient of datum j's likelihood term (D x N). Empty unless requested.
  Matrix per_datum_gradients;
};

class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::string name() const = 0;
  virtual Index dim() const = 0;
  virtual Index data_count() const = 0;

  virtual double potential(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
  virtual TargetEval evaluate(const Vector& theta, bool per_datum) const = 0;

  /// Analytic metric (expected Fisher information plus prior precision).
  virtual bool has_metric() const { return false; }
  virtual Matrix metric(const Vector& theta) const;
  /// dG[k](i, j) = d G_ij / d theta_k.
  virtual Tensor3 metric_derivative(const Vector& theta) const;

  /// Precision of the Gaussian prior; added to empirical Fisher metrics.
  virtual Matrix prior_precision() const = 0;
  virtual Vector prior_mean() const { return Vector::Zero(dim()); }
  Vector sample_prior(Rng& rng) const;

  /// DU J_N DU^T at theta.
  Matrix empirical_fisher(const Vector& theta) const;
};

/// Multivariate normal N(mean, cov); no data, the whole potential is the "prior".
class GaussianTarget final : public TargetModel {
 public:
  GaussianTarget(Vector mean, Matrix cov);

  std::string name() const override { return "gaussian"; }
  Index dim() const override { return mean_.size(); }
  Index data_count() const override { return 0; }
  double potential(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  TargetEval evaluate(const Vector& theta, bool per_datum) const override;
  bool has_metric() const override { return true; }
  Matrix metric(const Vector&) const override { return precision_; }
  Tensor3 metric_derivative(const Vector&) const override;
  Matrix prior_precision() const override { return precision_; }
  Vector prior_mean() const override { return mean_; }

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }

 private:
  Vector mean_;
  Matrix cov_, precision_;
};

/// y_j ~ N(mu(theta), sigma_y^2), theta ~ N(0, sigma_theta^2 I), with
/// mu(theta) = sum of odd-position coordinates + sum of squared even-position
/// coordinates (1-based). D = 2 is the banana.
class BbdTarget final : public TargetModel {
 public:
  BbdTarget(Vector y, Index dim, double sigma_y, double sigma_theta,
            kernels::Exec exec = kernels::Exec::parallel);

  static BbdTarget synthetic(Index dim, Index n_data, double mu_true, double sigma_y, double sigma_theta,
                             std::uint64_t seed, kernels::Exec exec = kernels::Exec::parallel);

  std::string name() const override { return dim_ == 2 ? "banana" : "bbd"; }
  Index dim() const override { return dim_; }
  Index data_count() const override { return y_.size(); }
  double potential(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  TargetEval evaluate(const Vector& theta, bool per_datum) const override;
  bool has_metric() const override { return true; }
  Matrix metric(const Vector& theta) const override;
  Tensor3 metric_derivative(const Vector& theta) const override;
  Matrix prior_precision() const override;

  double mean_function(const Vector& theta) const;
  /// a = d mu / d theta.
  Vector mean_gradient(const Vector& theta) const;
  const Vector& data() const { return y_; }
  double sigma_y() const { return sigma_y_; }
  double sigma_theta() const { return sigma_theta_; }

 private:
  Vector y_;
  Index dim_;
  double sigma_y_, sigma_theta_;
  kernels::Exec exec_;
};

}  // namespace gpemc
