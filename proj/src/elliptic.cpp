#include "gpemc/elliptic.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>

namespace gpemc {

// ---------------------------------------------------------------- K-L

double KlExpansion::kernel(double x0, double x1, double y0, double y1) const {
  const double r2 = (x0 - y0) * (x0 - y0) + (x1 - y1) * (x1 - y1);
  return variance * std::exp(-0.5 * r2 / (lengthscale * lengthscale));
}

KlExpansion KlExpansion::compute(double lengthscale, double variance, Index cells, Index D) {
  if (!(lengthscale > 0.0) || !(variance > 0.0)) throw DegenerateKernel("kl_expansion: kernel parameters must be positive");
  if (cells < 1) throw ShapeMismatch("kl_expansion: need at least one cell");
  KlExpansion kl;
  kl.lengthscale = lengthscale;
  kl.variance = variance;
  const Index n1 = cells + 1, P = n1 * n1;
  if (D < 1 || D > P) throw DegenerateKernel("kl_expansion: D exceeds the number of mesh nodes");
  const double h = 1.0 / static_cast<double>(cells);
  kl.nodes.resize(P, 2);
  kl.weights.resize(P);
  for (Index j = 0; j < n1; ++j)
    for (Index i = 0; i < n1; ++i) {
      const Index p = j * n1 + i;
      kl.nodes(p, 0) = static_cast<double>(i) * h;
      kl.nodes(p, 1) = static_cast<double>(j) * h;
      const double wi = (i == 0 || i == cells) ? 0.5 * h : h;
      const double wj = (j == 0 || j == cells) ? 0.5 * h : h;
      kl.weights(p) = wi * wj;
    }

  const Vector sw = kl.weights.array().sqrt();
  Matrix A(P, P);
  for (Index p = 0; p < P; ++p)
    for (Index r = p; r < P; ++r) {
      const double v = sw(p) * sw(r) * kl.kernel(kl.nodes(p, 0), kl.nodes(p, 1), kl.nodes(r, 0), kl.nodes(r, 1));
      A(p, r) = v;
      A(r, p) = v;
    }
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  if (es.info() != Eigen::Success) throw DegenerateKernel("kl_expansion: eigendecomposition failed");

  kl.eigenvalues.resize(D);
  kl.eigenvectors.resize(P, D);
  const double top = es.eigenvalues()(P - 1);
  for (Index d = 0; d < D; ++d) {
    const double lam = es.eigenvalues()(P - 1 - d);
    if (!(lam > 1e-12 * top)) throw DegenerateKernel("kl_expansion: requested modes exceed the numerically nonzero spectrum");
    Vector phi = es.eigenvectors().col(P - 1 - d).cwiseQuotient(sw);
    Index imax = 0;
    phi.cwiseAbs().maxCoeff(&imax);
    if (phi(imax) < 0.0) phi = -phi;
    kl.eigenvalues(d) = lam;
    kl.eigenvectors.col(d) = phi;
  }
  return kl;
}

Matrix KlExpansion::evaluate(const Matrix& X) const {
  const Index Q = X.rows(), P = nodes.rows(), D = terms();
  Matrix out = Matrix::Zero(Q, D);
  for (Index q = 0; q < Q; ++q) {
    Vector kw(P);
    for (Index p = 0; p < P; ++p) kw(p) = weights(p) * kernel(X(q, 0), X(q, 1), nodes(p, 0), nodes(p, 1));
    for (Index d = 0; d < D; ++d) out(q, d) = kw.dot(eigenvectors.col(d)) / eigenvalues(d);
  }
  return out;
}

// ---------------------------------------------------------------- solver

EllipticSolver::EllipticSolver(Index cells, std::shared_ptr<const KlExpansion> kl, Index obs_per_side)
    : M_(cells), kl_(std::move(kl)) {
  if (M_ < 2) throw ShapeMismatch("EllipticSolver: need at least 2 cells per side");
  if (obs_per_side < 2 || M_ % (obs_per_side - 1) != 0)
    throw ShapeMismatch("EllipticSolver: observation grid must coincide with mesh nodes");
  const Index n1 = M_ + 1;
  const double h = 1.0 / static_cast<double>(M_);
  coords_.resize(n1 * n1, 2);
  for (Index j = 0; j < n1; ++j)
    for (Index i = 0; i < n1; ++i) {
      coords_(j * n1 + i, 0) = static_cast<double>(i) * h;
      coords_(j * n1 + i, 1) = static_cast<double>(j) * h;
    }
  const Index D = kl_->terms();
  Matrix c = (kl_->nodes.rows() == coords_.rows() && kl_->nodes.isApprox(coords_, 0.0)) ? kl_->eigenvectors
                                                                                          : kl_->evaluate(coords_);
  basis_ = c * kl_->eigenvalues.cwiseSqrt().asDiagonal();
  (void)D;
  const Index step = M_ / (obs_per_side - 1);
  for (Index b = 0; b < obs_per_side; ++b)
    for (Index a = 0; a < obs_per_side; ++a) obs_nodes_.push_back(b * step * n1 + a * step);
}

EllipticSolution EllipticSolver::solve(const Vector& theta, bool with_sensitivity) const {
  if (theta.size() != dim()) throw ShapeMismatch("elliptic_solve: theta dimension");
  const Vector log_c = basis_ * theta;
  return solve_impl(log_c, with_sensitivity ? &basis_ : nullptr);
}

EllipticSolution EllipticSolver::solve_field(const Vector& log_c) const {
  if (log_c.size() != nodes()) throw ShapeMismatch("elliptic_solve: field size");
  return solve_impl(log_c, nullptr);
}

EllipticSolution EllipticSolver::solve_impl(const Vector& log_c, const Matrix* dlogc) const {
  using Sparse = Eigen::SparseMatrix<double>;
  const Index n1 = M_ + 1, P = n1 * n1;
  const double h = 1.0 / static_cast<double>(M_);
  const Index nu = (M_ - 1) * n1;
  auto unknown = [&](Index p) { const Index j = p / n1; return (j > 0 && j < M_) ? (j - 1) * n1 + p % n1 : Index(-1); };

  const Vector c = log_c.array().exp();
  Vector u(P);
  for (Index i = 0; i < n1; ++i) {
    u(i) = static_cast<double>(i) * h;
    u(M_ * n1 + i) = 1.0 - static_cast<double>(i) * h;
  }

  struct Face { Index a, b; double w; };
  std::vector<Face> faces;
  faces.reserve(static_cast<std::size_t>(2 * P));
  for (Index j = 1; j < M_; ++j)
    for (Index i = 0; i < M_; ++i) faces.push_back({j * n1 + i, j * n1 + i + 1, 1.0});
  for (Index j = 0; j < M_; ++j)
    for (Index i = 0; i < n1; ++i) faces.push_back({j * n1 + i, (j + 1) * n1 + i, (i == 0 || i == M_) ? 0.5 : 1.0});

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(faces.size() * 4);
  Vector rhs = Vector::Zero(nu);
  for (const Face& f : faces) {
    const double cf = 2.0 * c(f.a) * c(f.b) / (c(f.a) + c(f.b));
    const double t = f.w * cf;
    const Index ua = unknown(f.a), ub = unknown(f.b);
    if (ua >= 0) {
      trip.emplace_back(ua, ua, t);
      if (ub >= 0) trip.emplace_back(ua, ub, -t); else rhs(ua) += t * u(f.b);
    }
    if (ub >= 0) {
      trip.emplace_back(ub, ub, t);
      if (ua >= 0) trip.emplace_back(ub, ua, -t); else rhs(ub) += t * u(f.a);
    }
  }
  Sparse A(nu, nu);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Sparse> solver(A);
  if (solver.info() != Eigen::Success) throw SolverFailure("elliptic_solve: factorization failed");
  const Vector uu = solver.solve(rhs);
  if (solver.info() != Eigen::Success || !uu.allFinite()) throw SolverFailure("elliptic_solve: solve failed");
  for (Index j = 1; j < M_; ++j) u.segment(j * n1, n1) = uu.segment((j - 1) * n1, n1);

  EllipticSolution sol;
  sol.u = u;
  const Index no = obs_count();
  sol.obs.resize(no);
  for (Index o = 0; o < no; ++o) sol.obs(o) = u(obs_nodes_[static_cast<std::size_t>(o)]);

  if (dlogc) {
    const Index D = dlogc->cols();
    // d residual / d theta for R_P = sum_f w c_f (u_nb - u_P); du = A^{-1} dR.
    Matrix dR = Matrix::Zero(nu, D);
    for (const Face& f : faces) {
      const double ca = c(f.a), cb = c(f.b), s = ca + cb;
      const double dca = 2.0 * cb * cb / (s * s) * ca, dcb = 2.0 * ca * ca / (s * s) * cb;
      const double flux = f.w * (u(f.b) - u(f.a));
      const Index ua = unknown(f.a), ub = unknown(f.b);
      for (Index d = 0; d < D; ++d) {
        const double dcf = dca * (*dlogc)(f.a, d) + dcb * (*dlogc)(f.b, d);
        if (ua >= 0) dR(ua, d) += dcf * flux;
        if (ub >= 0) dR(ub, d) -= dcf * flux;
      }
    }
    const Matrix du = solver.solve(dR);
    if (solver.info() != Eigen::Success) throw SolverFailure("elliptic_solve: sensitivity solve failed");
    sol.sens = Matrix::Zero(D, no);
    for (Index o = 0; o < no; ++o) {
      const Index k = unknown(obs_nodes_[static_cast<std::size_t>(o)]);
      if (k >= 0) sol.sens.col(o) = du.row(k).transpose();
    }
  }
  return sol;
}

// ---------------------------------------------------------------- target

EllipticTarget::EllipticTarget(std::shared_ptr<const EllipticSolver> solver, Vector obs, double noise_sd)
    : solver_(std::move(solver)), obs_(std::move(obs)), noise_sd_(noise_sd) {
  if (obs_.size() != solver_->obs_count()) throw ShapeMismatch("EllipticTarget: observation count");
  if (!(noise_sd_ > 0.0)) throw ShapeMismatch("EllipticTarget: noise_sd must be positive");
}

std::pair<EllipticTarget, Vector> EllipticTarget::synthetic(const Options& opt, std::uint64_t seed) {
  auto kl = std::make_shared<const KlExpansion>(
      KlExpansion::compute(opt.kl_lengthscale, opt.kl_variance, opt.cells, opt.kl_terms));
  auto solver = std::make_shared<const EllipticSolver>(opt.cells, kl, opt.obs_per_side);
  Rng rng = make_rng(seed, Stream::data);
  const Vector theta_true = standard_normal(rng, opt.kl_terms);
  Vector y = solver->solve(theta_true, false).obs;
  for (Index o = 0; o < y.size(); ++o) y(o) += opt.noise_sd * standard_normal(rng);
  return {EllipticTarget(solver, std::move(y), opt.noise_sd), theta_true};
}

double EllipticTarget::potential(const Vector& theta) const {
  const Vector r = obs_ - solver_->solve(theta, false).obs;
  return 0.5 * r.squaredNorm() / (noise_sd_ * noise_sd_) + 0.5 * theta.squaredNorm();
}

Vector EllipticTarget::gradient(const Vector& theta) const { return evaluate(theta, false).gradient; }

TargetEval EllipticTarget::evaluate(const Vector& theta, bool per_datum) const {
  const EllipticSolution sol = solver_->solve(theta, true);
  const double s2 = noise_sd_ * noise_sd_;
  const Vector r = obs_ - sol.obs;
  TargetEval ev;
  ev.potential = 0.5 * r.squaredNorm() / s2 + 0.5 * theta.squaredNorm();
  ev.gradient = -sol.sens * r / s2 + theta;
  if (per_datum) {
    ev.per_datum_values = r.array().square() / (2.0 * s2);
    ev.per_datum_gradients = sol.sens * (-r / s2).asDiagonal();
  }
  return ev;
}

}  // namespace gpemc
