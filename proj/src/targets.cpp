#include "gpemc/targets.hpp"

namespace gpemc {

Matrix TargetModel::metric(const Vector&) const {
  throw Unsupported(name() + ": no analytic metric");
}

Tensor3 TargetModel::metric_derivative(const Vector&) const {
  throw Unsupported(name() + ": no analytic metric derivative");
}

Vector TargetModel::sample_prior(Rng& rng) const {
  Eigen::LLT<Matrix> llt(prior_precision());
  Vector z = standard_normal(rng, dim());
  return prior_mean() + llt.matrixU().solve(z);
}

Matrix TargetModel::empirical_fisher(const Vector& theta) const {
  TargetEval ev = evaluate(theta, true);
  if (ev.per_datum_gradients.cols() == 0) return Matrix::Zero(dim(), dim());
  return kernels::centered_gram(ev.per_datum_gradients);
}

// ---------------------------------------------------------------- Gaussian

GaussianTarget::GaussianTarget(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size())
    throw ShapeMismatch("GaussianTarget: covariance shape");
  Eigen::LLT<Matrix> llt(cov_);
  if (llt.info() != Eigen::Success) throw IllConditioned("GaussianTarget: covariance not SPD");
  precision_ = llt.solve(Matrix::Identity(mean_.size(), mean_.size()));
  precision_ = 0.5 * (precision_ + precision_.transpose());
}

double GaussianTarget::potential(const Vector& theta) const {
  const Vector d = theta - mean_;
  return 0.5 * d.dot(precision_ * d);
}

Vector GaussianTarget::gradient(const Vector& theta) const { return precision_ * (theta - mean_); }

TargetEval GaussianTarget::evaluate(const Vector& theta, bool) const {
  TargetEval ev;
  ev.potential = potential(theta);
  ev.gradient = gradient(theta);
  ev.per_datum_values.resize(0);
  ev.per_datum_gradients.resize(dim(), 0);
  return ev;
}

Tensor3 GaussianTarget::metric_derivative(const Vector&) const {
  return Tensor3(static_cast<std::size_t>(dim()), Matrix::Zero(dim(), dim()));
}

// ---------------------------------------------------------------- BBD

BbdTarget::BbdTarget(Vector y, Index dim, double sigma_y, double sigma_theta, kernels::Exec exec)
    : y_(std::move(y)), dim_(dim), sigma_y_(sigma_y), sigma_theta_(sigma_theta), exec_(exec) {
  if (dim_ < 2) throw ShapeMismatch("BbdTarget: dim must be >= 2");
  if (!(sigma_y_ > 0.0) || !(sigma_theta_ > 0.0)) throw ShapeMismatch("BbdTarget: scales must be positive");
}

BbdTarget BbdTarget::synthetic(Index dim, Index n_data, double mu_true, double sigma_y, double sigma_theta,
                               std::uint64_t seed, kernels::Exec exec) {
  Rng rng = make_rng(seed, Stream::data);
  Vector y(n_data);
  for (Index j = 0; j < n_data; ++j) y(j) = mu_true + sigma_y * standard_normal(rng);
  return BbdTarget(std::move(y), dim, sigma_y, sigma_theta, exec);
}

double BbdTarget::mean_function(const Vector& theta) const {
  double mu = 0.0;
  for (Index i = 0; i < dim_; ++i) mu += (i % 2 == 0) ? theta(i) : theta(i) * theta(i);
  return mu;
}

Vector BbdTarget::mean_gradient(const Vector& theta) const {
  Vector a(dim_);
  for (Index i = 0; i < dim_; ++i) a(i) = (i % 2 == 0) ? 1.0 : 2.0 * theta(i);
  return a;
}

double BbdTarget::potential(const Vector& theta) const {
  const double mu = mean_function(theta);
  const double inv2s2 = 0.5 / (sigma_y_ * sigma_y_);
  const double* y = y_.data();
  const double lik = kernels::chunked_sum(
      y_.size(), [&](Index j) { const double r = y[j] - mu; return r * r * inv2s2; }, exec_);
  return lik + 0.5 * theta.squaredNorm() / (sigma_theta_ * sigma_theta_);
}

Vector BbdTarget::gradient(const Vector& theta) const {
  const double mu = mean_function(theta);
  const double* y = y_.data();
  const double s = kernels::chunked_sum(y_.size(), [&](Index j) { return y[j] - mu; }, exec_);
  return (-s / (sigma_y_ * sigma_y_)) * mean_gradient(theta) + theta / (sigma_theta_ * sigma_theta_);
}

TargetEval BbdTarget::evaluate(const Vector& theta, bool per_datum) const {
  TargetEval ev;
  ev.potential = potential(theta);
  ev.gradient = gradient(theta);
  if (per_datum) {
    const double mu = mean_function(theta);
    const double s2 = sigma_y_ * sigma_y_;
    const Vector a = mean_gradient(theta);
    const Vector r = y_.array() - mu;
    ev.per_datum_values = r.array().square() / (2.0 * s2);
    ev.per_datum_gradients = a * (-r / s2).transpose();
  }
  return ev;
}

Matrix BbdTarget::metric(const Vector& theta) const {
  const Vector a = mean_gradient(theta);
  const double w = static_cast<double>(y_.size()) / (sigma_y_ * sigma_y_);
  return w * a * a.transpose() + prior_precision();
}

Tensor3 BbdTarget::metric_derivative(const Vector& theta) const {
  const Vector a = mean_gradient(theta);
  const double w = static_cast<double>(y_.size()) / (sigma_y_ * sigma_y_);
  Tensor3 dG(static_cast<std::size_t>(dim_), Matrix::Zero(dim_, dim_));
  for (Index k = 1; k < dim_; k += 2) {
    Vector da = Vector::Zero(dim_);
    da(k) = 2.0;
    dG[static_cast<std::size_t>(k)] = w * (da * a.transpose() + a * da.transpose());
  }
  return dG;
}

Matrix BbdTarget::prior_precision() const {
  return Matrix::Identity(dim_, dim_) / (sigma_theta_ * sigma_theta_);
}

}  // namespace gpemc
