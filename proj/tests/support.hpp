#pragma once

#include "gpemc/gp.hpp"
#include "gpemc/rng.hpp"
#include "gpemc/targets.hpp"

#include <functional>

namespace gpemc::test {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-12) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

/// Central differences of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian; column i is d f / d x_i.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
  Matrix J;
  for (Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    const Vector d = (f(a) - f(b)) / (2.0 * h);
    if (i == 0) J.resize(d.size(), x.size());
    J.col(i) = d;
  }
  return J;
}

inline Matrix uniform_points(Rng& rng, Index n, Index D, double lo, double hi) {
  Matrix X(n, D);
  for (Index i = 0; i < n; ++i)
    for (Index d = 0; d < D; ++d) X(i, d) = lo + (hi - lo) * uniform01(rng);
  return X;
}

inline Vector uniform_vector(Rng& rng, Index D, double lo, double hi) {
  return uniform_points(rng, 1, D, lo, hi).row(0).transpose();
}

/// Design with exact potentials and gradients (and per-datum terms when the target has data).
inline DesignSet design_from(const TargetModel& t, const Matrix& X, bool gradients = true) {
  const bool pd = gradients && t.data_count() > 0;
  DesignSet d;
  d.points.resize(0, t.dim());
  if (gradients) d.gradients = Matrix(0, t.dim());
  if (pd) {
    d.per_datum_values = Matrix(0, t.data_count());
    d.per_datum_gradients = std::vector<Matrix>(static_cast<std::size_t>(t.dim()), Matrix(0, t.data_count()));
  }
  for (Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const TargetEval e = t.evaluate(x, pd);
    d.append(x, e.potential, gradients ? &e.gradient : nullptr, pd ? &e.per_datum_values : nullptr,
             pd ? &e.per_datum_gradients : nullptr);
  }
  return d;
}

/// Design with a smooth non-polynomial potential (no data).
inline DesignSet smooth_design(const Matrix& X, bool gradients) {
  DesignSet d;
  d.points = X;
  d.potentials.resize(X.rows());
  Matrix G(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i) {
    double s = 0.0;
    for (Index k = 0; k < X.cols(); ++k) s += std::sin(1.3 * X(i, k) + 0.2 * k) + 0.25 * X(i, k) * X(i, k);
    d.potentials(i) = s;
    for (Index k = 0; k < X.cols(); ++k) G(i, k) = 1.3 * std::cos(1.3 * X(i, k) + 0.2 * k) + 0.5 * X(i, k);
  }
  if (gradients) d.gradients = G;
  return d;
}

inline Hyperparameters hyper(const Vector& rho, double nugget = 1e-8) {
  Hyperparameters h;
  h.rho = rho;
  h.nugget = nugget;
  return h;
}

}  // namespace gpemc::test
