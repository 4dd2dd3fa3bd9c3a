#include "gpemc/geometry.hpp"

#include <chrono>

namespace gpemc {

Tensor3 christoffel_from_dmetric(const Tensor3& dG) {
  const Index D = static_cast<Index>(dG.size());
  Tensor3 out(dG.size(), Matrix(D, D));
  for (Index m = 0; m < D; ++m)
    for (Index i = 0; i < D; ++i)
      for (Index j = 0; j < D; ++j)
        out[m](i, j) = 0.5 * (dG[i](m, j) + dG[j](i, m) - dG[m](i, j));
  return out;
}

Tensor3 dmetric_from_christoffel(const Tensor3& chr) {
  const Index D = static_cast<Index>(chr.size());
  Tensor3 out(chr.size(), Matrix(D, D));
  for (Index k = 0; k < D; ++k)
    for (Index i = 0; i < D; ++i)
      for (Index j = 0; j < D; ++j) out[k](i, j) = chr[j](i, k) + chr[i](j, k);
  return out;
}

ExactGeometry::ExactGeometry(std::shared_ptr<const TargetModel> target) : target_(std::move(target)) {}

Vector ExactGeometry::gradient(const Vector& theta) const { return target_->gradient(theta); }

GeometryPoint ExactGeometry::evaluate(const Vector& theta, GeometryLevel level) const {
  GeometryPoint g;
  g.gradient = target_->gradient(theta);
  if (level == GeometryLevel::gradient) return g;
  if (!target_->has_metric()) throw Unsupported("target '" + target_->name() + "' has no analytic metric");
  g.metric = target_->metric(theta);
  if (level == GeometryLevel::full) {
    g.dmetric = target_->metric_derivative(theta);
    g.christoffel = christoffel_from_dmetric(g.dmetric);
  }
  return g;
}

EmulatedGeometry::EmulatedGeometry(std::shared_ptr<const Emulator> emulator, Matrix prior_precision, double reg)
    : emulator_(std::move(emulator)), prior_precision_(std::move(prior_precision)), reg_(reg) {
  if (prior_precision_.rows() != emulator_->dim() || prior_precision_.cols() != emulator_->dim())
    throw ShapeMismatch("EmulatedGeometry: prior precision shape");
}

Vector EmulatedGeometry::gradient(const Vector& theta) const { return emulator_->gradient(theta); }

GeometryPoint EmulatedGeometry::evaluate(const Vector& theta, GeometryLevel level) const {
  GeometryPoint g;
  g.gradient = emulator_->gradient(theta);
  if (level == GeometryLevel::gradient) return g;
  const Index D = dim();
  Matrix efi;
  Tensor3 chr;
  emulator_->fisher_and_christoffel(theta, efi, level == GeometryLevel::full ? &chr : nullptr);
  const double lambda = reg_ * efi.trace() / static_cast<double>(D);
  g.metric = efi + prior_precision_;
  g.metric.diagonal().array() += lambda;
  if (level == GeometryLevel::full) {
    g.dmetric = dmetric_from_christoffel(chr);
    // lambda moves with theta through the trace.
    for (Index k = 0; k < D; ++k) {
      const double dl = reg_ * g.dmetric[k].trace() / static_cast<double>(D);
      g.dmetric[k].diagonal().array() += dl;
    }
    g.christoffel = christoffel_from_dmetric(g.dmetric);
  }
  return g;
}

Vector InstrumentedGeometry::gradient(const Vector& theta) const {
  const auto t0 = std::chrono::steady_clock::now();
  Vector g = inner_->gradient(theta);
  ns_ += std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
  ++calls_;
  return g;
}

GeometryPoint InstrumentedGeometry::evaluate(const Vector& theta, GeometryLevel level) const {
  const auto t0 = std::chrono::steady_clock::now();
  GeometryPoint g = inner_->evaluate(theta, level);
  ns_ += std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
  ++calls_;
  return g;
}

}  // namespace gpemc
