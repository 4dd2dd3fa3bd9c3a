#include "gpemc/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gpemc {

double log_sum_exp(const Vector& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

IndependenceProposal::IndependenceProposal(Matrix centers, std::vector<Matrix> precisions, const Vector& log_weights)
    : centers_(std::move(centers)), precisions_(std::move(precisions)) {
  const Index K = centers_.rows(), D = centers_.cols();
  if (K == 0) throw ShapeMismatch("proposal: need at least one center");
  if (static_cast<Index>(precisions_.size()) != K || log_weights.size() != K)
    throw ShapeMismatch("proposal: centers, precisions and weights disagree");
  const double lse = log_sum_exp(log_weights);
  if (!std::isfinite(lse)) throw ShapeMismatch("proposal: weights are not finite");
  log_weights_ = log_weights.array() - lse;
  log_norm_.resize(K);
  chol_upper_.reserve(static_cast<std::size_t>(K));
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (Index i = 0; i < K; ++i) {
    const Matrix& P = precisions_[static_cast<std::size_t>(i)];
    if (P.rows() != D || P.cols() != D) throw ShapeMismatch("proposal: precision shape");
    Eigen::LLT<Matrix> llt(P);
    if (llt.info() != Eigen::Success) throw IllConditioned("proposal: precision is not positive definite");
    chol_upper_.push_back(llt.matrixU());
    const double half_logdet = llt.matrixLLT().diagonal().array().log().sum();
    log_norm_(i) = log_weights_(i) + half_logdet - 0.5 * static_cast<double>(D) * log2pi;
  }
  cumulative_.resize(static_cast<std::size_t>(K));
  double acc = 0.0;
  for (Index i = 0; i < K; ++i) cumulative_[static_cast<std::size_t>(i)] = acc += std::exp(log_weights_(i));
}

IndependenceProposal IndependenceProposal::from_design(const DesignSet& design, const Matrix& prior_precision,
                                                       double reg) {
  const Index n = design.size(), D = design.dim();
  std::vector<Matrix> prec;
  prec.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Matrix efi = Matrix::Zero(D, D);
    if (design.per_datum_gradients) {
      Matrix DU(D, design.data_count());
      for (Index d = 0; d < D; ++d) DU.row(d) = (*design.per_datum_gradients)[static_cast<std::size_t>(d)].row(i);
      efi = kernels::centered_gram(DU);
    }
    const double lambda = reg * efi.trace() / static_cast<double>(D);
    Matrix P = efi + prior_precision;
    P.diagonal().array() += lambda;
    prec.push_back(std::move(P));
  }
  return IndependenceProposal(design.points, std::move(prec), -design.potentials);
}

double IndependenceProposal::log_density(const Vector& theta) const {
  const Index K = size();
  Vector terms(K);
  for (Index i = 0; i < K; ++i) {
    const Vector r = chol_upper_[static_cast<std::size_t>(i)] * (theta - centers_.row(i).transpose());
    terms(i) = log_norm_(i) - 0.5 * r.squaredNorm();
  }
  return log_sum_exp(terms);
}

Vector IndependenceProposal::sample(Rng& rng) const {
  const double u = uniform01(rng) * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  const Index i = std::min<Index>(static_cast<Index>(it - cumulative_.begin()), size() - 1);
  const Vector z = standard_normal(rng, dim());
  // x = center + U^{-1} z has covariance (U^T U)^{-1}.
  return centers_.row(i).transpose() +
         chol_upper_[static_cast<std::size_t>(i)].triangularView<Eigen::Upper>().solve(z);
}

// ---------------------------------------------------------------- regeneration

SplitKernelLogs split_kernel_logs(double log_q_next, double log_w_t, double log_w_next, double log_c) {
  SplitKernelLogs s;
  s.log_T = log_q_next + std::min(0.0, log_w_next - log_w_t);
  s.log_S = std::min(0.0, log_c - log_w_t);
  s.log_Q = log_q_next + std::min(0.0, log_w_next - log_c);
  return s;
}

double log_regen_prob(double log_w_t, double log_w_next, double log_c) {
  if (!std::isfinite(log_w_t) || !std::isfinite(log_w_next) || !std::isfinite(log_c))
    return -std::numeric_limits<double>::infinity();
  const double lr =
      std::min(0.0, log_c - log_w_t) + std::min(0.0, log_w_next - log_c) - std::min(0.0, log_w_next - log_w_t);
  return std::min(0.0, lr);
}

QDraw sample_Q(Rng& rng, const std::function<double(const Vector&)>& potential, const IndependenceProposal& q,
               int max_tries) {
  for (int t = 1; t <= max_tries; ++t) {
    QDraw d;
    d.theta = q.sample(rng);
    d.tries = t;
    const double u = uniform01(rng);
    d.potential = potential(d.theta);
    const double log_w = -d.potential - q.log_density(d.theta);
    if (std::isfinite(log_w) && std::log(u) < std::min(0.0, log_w - q.log_c())) return d;
  }
  throw RejectionBudgetExhausted("sample_Q: no acceptance within " + std::to_string(max_tries) + " tries");
}

}  // namespace gpemc
