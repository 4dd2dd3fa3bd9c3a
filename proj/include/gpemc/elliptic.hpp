#pragma once

#include "gpemc/targets.hpp"

#include <memory>

namespace gpemc {

/// Top eigenpairs of the Gaussian-kernel integral operator on [0,1]^2,
/// discretized by Nystrom quadrature on a regular vertex grid.
struct KlExpansion {
  double lengthscale = 0.5;
  double variance = 1.0;
  Matrix nodes;         // P x 2
  Vector weights;       // trapezoid weights, sum to 1
  Vector eigenvalues;   // D, non-increasing
  Matrix eigenvectors;  // P x D, sum_p w_p c_d(x_p)^2 = 1

  static KlExpansion compute(double lengthscale, double variance, Index cells, Index D);

  double kernel(double x0, double x1, double y0, double y1) const;
  /// Nystrom extension of the eigenfunctions to arbitrary points (rows of X).
  Matrix evaluate(const Matrix& X) const;
  Index terms() const { return eigenvalues.size(); }
};

struct EllipticSolution {
  Vector u;       // all (M+1)^2 nodes, index j*(M+1)+i
  Vector obs;     // predictions at observation nodes
  Matrix sens;    // D x n_obs, d obs / d theta (empty if not requested)
};

/// Cell-vertex finite volumes for -div(c grad u) = 0 on [0,1]^2 with
/// u = x1 at x2 = 0, u = 1 - x1 at x2 = 1, zero flux at x1 = 0 and x1 = 1.
/// Face diffusivities are harmonic means of nodal values.
class EllipticSolver {
 public:
  /// `cells` per side; must be a multiple of (obs_per_side - 1).
  EllipticSolver(Index cells, std::shared_ptr<const KlExpansion> kl, Index obs_per_side = 11);

  Index cells() const { return M_; }
  Index nodes() const { return (M_ + 1) * (M_ + 1); }
  Index obs_count() const { return obs_nodes_.size(); }
  Index dim() const { return basis_.cols(); }
  const Matrix& node_coords() const { return coords_; }
  const std::vector<Index>& obs_nodes() const { return obs_nodes_; }

  /// log c at nodes = basis * theta, basis_{p,d} = sqrt(lambda_d) c_d(x_p).
  const Matrix& log_diffusivity_basis() const { return basis_; }

  EllipticSolution solve(const Vector& theta, bool with_sensitivity) const;
  /// Solve for an explicit nodal log-diffusivity field (no sensitivities).
  EllipticSolution solve_field(const Vector& log_c) const;

 private:
  EllipticSolution solve_impl(const Vector& log_c, const Matrix* dlogc) const;

  Index M_;
  std::shared_ptr<const KlExpansion> kl_;
  Matrix coords_;
  Matrix basis_;
  std::vector<Index> obs_nodes_;
};

/// Bayesian inverse problem for the log-diffusivity K-L coefficients with
/// N(0, I) priors and Gaussian observation noise.
class EllipticTarget final : public TargetModel {
 public:
  EllipticTarget(std::shared_ptr<const EllipticSolver> solver, Vector obs, double noise_sd);

  struct Options {
    Index cells = 20;
    Index obs_per_side = 11;
    Index kl_terms = 6;
    double kl_lengthscale = 0.5;
    double kl_variance = 1.0;
    double noise_sd = 0.1;
  };
  /// Synthetic data from theta_true ~ prior; returns the target and theta_true.
  static std::pair<EllipticTarget, Vector> synthetic(const Options& opt, std::uint64_t seed);

  std::string name() const override { return "elliptic"; }
  Index dim() const override { return solver_->dim(); }
  Index data_count() const override { return obs_.size(); }
  double potential(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  TargetEval evaluate(const Vector& theta, bool per_datum) const override;
  Matrix prior_precision() const override { return Matrix::Identity(dim(), dim()); }

  const Vector& observations() const { return obs_; }
  const EllipticSolver& solver() const { return *solver_; }
  double noise_sd() const { return noise_sd_; }

 private:
  std::shared_ptr<const EllipticSolver> solver_;
  Vector obs_;
  double noise_sd_;
};

}  // namespace gpemc
