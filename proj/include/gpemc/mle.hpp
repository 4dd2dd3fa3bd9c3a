#pragma once

#include "gpemc/gp.hpp"

#include <cstdint>
#include <string>

namespace gpemc {

/// Profile log-likelihood of the correlation rates with beta and sigma^2
/// integrated out:
///   l(rho) = -(n~-q)/2 log sigma2_hat - 1/2 log det C - 1/2 log det B.
struct LikelihoodEval {
  double value = 0.0;
  Vector grad;  // d l / d rho
  Matrix hess;  // d^2 l / d rho d rho'
};

/// derivs: 0 value only, 1 adds the gradient, 2 adds the Hessian.
LikelihoodEval profile_log_likelihood(const DesignSet& design, const Vector& rho, double nugget, int derivs);

/// Derivative of the augmented design correlation w.r.t. rho_d (no nugget).
Matrix design_corr_drho(const DesignSet& design, const Vector& rho, Index d);

struct MleOptions {
  int restarts = 5;
  int max_iters = 200;
  double tau_lo = -9.0;
  double tau_hi = 9.0;
  double gtol = 1e-5;
  std::uint64_t seed = 0;
};

struct MleResult {
  Hyperparameters hyper;
  double loglik = 0.0;
  /// Projected gradient norm in tau coordinates.
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Non-empty when every restart failed and the best point seen is returned.
  std::string warning;
};

/// Maximizes l over tau = -log rho with a box-bounded trust-region Newton
/// method from init_tau and (restarts - 1) jittered starts.
MleResult mle_hyper(const DesignSet& design, const Vector& init_tau, double nugget, const MleOptions& opts = {});

/// A data-scaled starting point: rho_d = 1 / (2 var_d) of the design coordinates.
Vector default_init_tau(const DesignSet& design);

}  // namespace gpemc
