#pragma once

#include "gpemc/core.hpp"
#include "gpemc/kernels.hpp"

#include <optional>
#include <span>

namespace gpemc {

/// Design points with exact potentials and optional derivative information.
///
/// Derivative data are stored per point; the stacked (coordinate-major)
/// vectors and matrices used by the emulator are assembled on demand:
///   u~ = [u; dU/dtheta_1 at all points; ...; dU/dtheta_D at all points].
struct DesignSet {
  Matrix points;                      // n x D
  Vector potentials;                  // n
  std::optional<Matrix> gradients;    // n x D, row i = grad U(point i)
  /// Per-datum likelihood terms: values n x N and D gradient blocks n x N.
  std::optional<Matrix> per_datum_values;
  std::optional<std::vector<Matrix>> per_datum_gradients;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
  bool has_gradients() const { return gradients.has_value(); }
  bool has_per_datum() const { return per_datum_values.has_value(); }
  Index data_count() const { return per_datum_values ? per_datum_values->cols() : 0; }
  /// n~ = n or n(1+D).
  Index augmented_size() const { return has_gradients() ? size() * (1 + dim()) : size(); }

  /// u~ (coordinate-major stacking).
  Vector stacked_observations() const;
  /// U~ : n~ x N, rows stacked like u~.
  Matrix stacked_per_datum() const;
  /// Replaces per-datum data from a stacked n~ x N matrix.
  void set_stacked_per_datum(const Matrix& stacked);

  /// Throws ShapeMismatch on inconsistent shapes or coincident points.
  void validate() const;
  DesignSet subset(std::span<const Index> rows) const;
  DesignSet without_gradients() const;

  /// Appends one point. `grad` and per-datum parts must match the set's layout.
  void append(const Vector& point, double potential, const Vector* grad = nullptr,
              const Vector* pd_values = nullptr, const Matrix* pd_gradients = nullptr);
};

struct Hyperparameters {
  Vector rho;           // positive correlation rates
  double nugget = 1e-8;

  static Hyperparameters from_tau(const Vector& tau, double nugget);
  Vector tau() const { return -rho.array().log().matrix(); }
  void validate(Index dim) const;
};

/// Rows of the quadratic basis h(theta) = [1, theta, theta^2] and its derivatives.
/// order 0 -> 1 x q, order 1 -> D x q, order 2 -> D^2 x q.
Matrix basis(const Vector& theta, int order);
/// Stacked basis rows for many points in coordinate-major layout.
Matrix basis_block(const Matrix& points, int order);
inline Index basis_size(Index dim) { return 1 + 2 * dim; }

/// Correlation block between point sets with derivative orders (a, b).
Matrix corr_block(const Matrix& A, const Matrix& B, int a, int b, const Vector& rho);

/// Augmented design correlation C~ (no nugget), coordinate-major layout.
Matrix design_corr(const DesignSet& design, const Vector& rho);

/// Generalized-least-squares pieces for correlation C (nugget included) and
/// basis H, computed through W = L^{-1} H = Q_w R_w so that P H = I and
/// Q H = 0 hold to working precision:
///   P = R_w^{-1} Q_w^T L^{-1},  Q = A^T A with A = (I - Q_w Q_w^T) L^{-1}.
struct GlsSystem {
  Eigen::LLT<Matrix> chol;
  Matrix W, P, Q;
  Matrix Rw;  // q x q upper triangular, B = Rw^T Rw
  double logdet_C = 0.0, logdet_B = 0.0;
};
/// Throws IllConditioned if C is not numerically positive definite or H is rank deficient.
GlsSystem factor_gls(const Matrix& C, const Matrix& H);

struct Prediction {
  Vector mean;
  Matrix cov;     // sigma2_hat * C**, empty unless requested
  Index dof = 0;  // n~ - q
};

struct BuildOptions {
  bool escalate_nugget = true;
  double max_nugget = 1e-4;
};

/// Factorized derivative-aware GP emulator (immutable after build).
class Emulator {
 public:
  static Emulator build(DesignSet design, Hyperparameters hyper, const BuildOptions& opts = {});

  const DesignSet& design() const { return design_; }
  /// Hyperparameters with the nugget actually used.
  const Hyperparameters& hyper() const { return hyper_; }
  Index dim() const { return design_.dim(); }
  Index augmented_size() const { return H_.rows(); }
  Index q() const { return H_.cols(); }

  const Matrix& H() const { return H_; }
  const Matrix& B() const { return B_; }
  const Matrix& P() const { return P_; }
  const Matrix& Q() const { return Q_; }
  const Vector& beta_hat() const { return beta_; }
  const Vector& observations() const { return u_; }
  double sigma2_hat() const { return sigma2_; }
  /// True when the residual u~ - H beta is numerically zero.
  bool sigma2_degenerate() const { return sigma2_degenerate_; }
  bool has_gfi() const { return gfi_.has_value(); }
  const Matrix& gfi() const;

  /// C between evaluation points (order alpha) and the augmented design.
  Matrix cross_corr(const Matrix& E, int order) const;
  /// L~ = H_E P + C_E Q, rows in the evaluation layout.
  Matrix linear_map(const Matrix& E, int order) const;

  Prediction predict(const Matrix& E, int order, bool with_cov) const;
  /// Diagonal of the unscaled order-0 predictive correlation C**.
  Vector predictive_correlation(const Matrix& E) const;

  /// Emulated empirical Fisher information, one D x D matrix per point.
  std::vector<Matrix> predict_efi(const Matrix& E) const;
  /// Emulated Christoffel symbols of the first kind; result[p][k](i, j) = Gamma_{ij,k}.
  std::vector<Tensor3> predict_christoffel(const Matrix& E) const;

  double potential(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  Matrix hessian(const Vector& x) const;
  /// Metric pieces at one point; `gamma` may be null.
  void fisher_and_christoffel(const Vector& x, Matrix& efi, Tensor3* gamma) const;

 private:
  /// L~ R for the gFI factor R, without forming L~.
  Matrix factor_map(const Matrix& E, int order) const;

  DesignSet design_;
  Hyperparameters hyper_;
  Eigen::LLT<Matrix> chol_;
  Matrix H_, W_, B_, P_, Q_, Rw_;
  Vector u_, beta_, gamma_;
  double sigma2_ = 0.0;
  bool sigma2_degenerate_ = false;
  std::optional<Matrix> gfi_;
  /// R with gFI = R R^T (centered per-datum rows or a Cholesky-like factor).
  Matrix gfi_factor_, PR_, QR_;
};

}  // namespace gpemc
