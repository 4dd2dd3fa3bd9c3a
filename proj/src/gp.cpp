#include "gpemc/gp.hpp"

#include <cmath>
#include <limits>

namespace gpemc {

// ---------------------------------------------------------------- DesignSet

Vector DesignSet::stacked_observations() const {
  const Index n = size(), D = dim();
  Vector u(augmented_size());
  u.head(n) = potentials;
  if (gradients)
    for (Index k = 0; k < D; ++k) u.segment(n + k * n, n) = gradients->col(k);
  return u;
}

Matrix DesignSet::stacked_per_datum() const {
  if (!has_per_datum()) throw MissingPerDatum("design has no per-datum data");
  const Index n = size(), D = dim(), N = data_count();
  Matrix U(augmented_size(), N);
  U.topRows(n) = *per_datum_values;
  if (gradients)
    for (Index k = 0; k < D; ++k) U.middleRows(n + k * n, n) = (*per_datum_gradients)[static_cast<std::size_t>(k)];
  return U;
}

void DesignSet::set_stacked_per_datum(const Matrix& stacked) {
  const Index n = size(), D = dim();
  if (stacked.rows() != augmented_size()) throw ShapeMismatch("per-datum matrix has wrong row count");
  per_datum_values = stacked.topRows(n);
  if (gradients) {
    std::vector<Matrix> g;
    for (Index k = 0; k < D; ++k) g.push_back(stacked.middleRows(n + k * n, n));
    per_datum_gradients = std::move(g);
  } else {
    per_datum_gradients.reset();
  }
}

void DesignSet::validate() const {
  const Index n = size(), D = dim();
  if (n < 1 || D < 1) throw ShapeMismatch("design must have at least one point and dimension");
  if (potentials.size() != n) throw ShapeMismatch("design potentials length differs from point count");
  if (gradients && (gradients->rows() != n || gradients->cols() != D))
    throw ShapeMismatch("design gradients must be n x D");
  if (per_datum_values) {
    if (per_datum_values->rows() != n) throw ShapeMismatch("per-datum values must have n rows");
    if (gradients) {
      if (!per_datum_gradients || static_cast<Index>(per_datum_gradients->size()) != D)
        throw ShapeMismatch("per-datum gradients must have D blocks");
      for (const Matrix& g : *per_datum_gradients)
        if (g.rows() != n || g.cols() != per_datum_values->cols())
          throw ShapeMismatch("per-datum gradient block shape");
    }
  }
  if (!points.allFinite() || !potentials.allFinite()) throw ShapeMismatch("design contains non-finite values");
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if ((points.row(i) - points.row(j)).squaredNorm() == 0.0)
        throw ShapeMismatch("design points must be pairwise distinct");
}

DesignSet DesignSet::subset(std::span<const Index> rows) const {
  DesignSet s;
  const Index m = static_cast<Index>(rows.size());
  s.points.resize(m, dim());
  s.potentials.resize(m);
  for (Index r = 0; r < m; ++r) {
    s.points.row(r) = points.row(rows[static_cast<std::size_t>(r)]);
    s.potentials(r) = potentials(rows[static_cast<std::size_t>(r)]);
  }
  if (gradients) {
    Matrix g(m, dim());
    for (Index r = 0; r < m; ++r) g.row(r) = gradients->row(rows[static_cast<std::size_t>(r)]);
    s.gradients = std::move(g);
  }
  if (per_datum_values) {
    Matrix v(m, data_count());
    for (Index r = 0; r < m; ++r) v.row(r) = per_datum_values->row(rows[static_cast<std::size_t>(r)]);
    s.per_datum_values = std::move(v);
    if (per_datum_gradients) {
      std::vector<Matrix> gs;
      for (const Matrix& g : *per_datum_gradients) {
        Matrix b(m, g.cols());
        for (Index r = 0; r < m; ++r) b.row(r) = g.row(rows[static_cast<std::size_t>(r)]);
        gs.push_back(std::move(b));
      }
      s.per_datum_gradients = std::move(gs);
    }
  }
  return s;
}

DesignSet DesignSet::without_gradients() const {
  DesignSet s;
  s.points = points;
  s.potentials = potentials;
  s.per_datum_values = per_datum_values;
  return s;
}

namespace {
void append_row(Matrix& M, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  M.conservativeResize(M.rows() + 1, row.size());
  M.row(M.rows() - 1) = row;
}
}  // namespace

void DesignSet::append(const Vector& point, double potential, const Vector* grad, const Vector* pd_values,
                       const Matrix* pd_gradients) {
  if (size() > 0 && point.size() != dim()) throw ShapeMismatch("append: point dimension");
  if (size() == 0) points.resize(0, point.size());
  append_row(points, point.transpose());
  potentials.conservativeResize(potentials.size() + 1);
  potentials(potentials.size() - 1) = potential;
  if (gradients) {
    if (!grad) throw ShapeMismatch("append: design carries gradients");
    append_row(*gradients, grad->transpose());
  }
  if (per_datum_values) {
    if (!pd_values) throw MissingPerDatum("append: design carries per-datum data");
    append_row(*per_datum_values, pd_values->transpose());
    if (per_datum_gradients) {
      if (!pd_gradients) throw MissingPerDatum("append: per-datum gradients required");
      for (Index k = 0; k < dim(); ++k) append_row((*per_datum_gradients)[static_cast<std::size_t>(k)], pd_gradients->row(k));
    }
  }
}

// ---------------------------------------------------------------- hyper

Hyperparameters Hyperparameters::from_tau(const Vector& tau, double nugget) {
  Hyperparameters h;
  h.rho = (-tau.array()).exp();
  h.nugget = nugget;
  return h;
}

void Hyperparameters::validate(Index dim) const {
  if (rho.size() != dim) throw ShapeMismatch("rho length must equal the dimension");
  if (!rho.allFinite() || (rho.array() <= 0.0).any()) throw ShapeMismatch("rho must be positive");
  if (!(nugget >= 0.0)) throw ShapeMismatch("nugget must be non-negative");
}

// ---------------------------------------------------------------- basis

Matrix basis(const Vector& theta, int order) {
  const Index D = theta.size(), q = basis_size(D);
  switch (order) {
    case 0: {
      Matrix h(1, q);
      h(0, 0) = 1.0;
      h.block(0, 1, 1, D) = theta.transpose();
      h.block(0, 1 + D, 1, D) = theta.array().square().matrix().transpose();
      return h;
    }
    case 1: {
      Matrix h = Matrix::Zero(D, q);
      for (Index k = 0; k < D; ++k) {
        h(k, 1 + k) = 1.0;
        h(k, 1 + D + k) = 2.0 * theta(k);
      }
      return h;
    }
    case 2: {
      Matrix h = Matrix::Zero(D * D, q);
      for (Index k = 0; k < D; ++k) h(k * D + k, 1 + D + k) = 2.0;
      return h;
    }
    default:
      throw Unsupported("basis: order must be 0, 1 or 2");
  }
}

Matrix basis_block(const Matrix& points, int order) {
  const Index m = points.rows(), D = points.cols();
  const Index per = order == 0 ? 1 : (order == 1 ? D : D * D);
  Matrix H(m * per, basis_size(D));
  for (Index i = 0; i < m; ++i) {
    const Matrix h = basis(points.row(i).transpose(), order);
    for (Index c = 0; c < per; ++c) H.row(c * m + i) = h.row(c);
  }
  return H;
}

Matrix corr_block(const Matrix& A, const Matrix& B, int a, int b, const Vector& rho) {
  Matrix out;
  kernels::se_corr_block(A, B, a, b, rho, out);
  return out;
}

// ---------------------------------------------------------------- emulator

Matrix design_corr(const DesignSet& d, const Vector& rho) {
  const Matrix& X = d.points;
  if (!d.has_gradients()) return corr_block(X, X, 0, 0, rho);
  const Index n = d.size(), nt = d.augmented_size();
  Matrix C(nt, nt);
  C.topLeftCorner(n, n) = corr_block(X, X, 0, 0, rho);
  C.topRightCorner(n, nt - n) = corr_block(X, X, 0, 1, rho);
  C.bottomLeftCorner(nt - n, n) = C.topRightCorner(n, nt - n).transpose();
  C.bottomRightCorner(nt - n, nt - n) = corr_block(X, X, 1, 1, rho);
  return C;
}

namespace {

bool factor_ok(const Eigen::LLT<Matrix>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const Vector d = llt.matrixLLT().diagonal();
  if (!d.allFinite() || (d.array() <= 0.0).any()) return false;
  const double ratio = d.minCoeff() / d.maxCoeff();
  return ratio * ratio > 1e-15;
}

}  // namespace

GlsSystem factor_gls(const Matrix& C, const Matrix& H) {
  GlsSystem g;
  const Index nt = C.rows(), q = H.cols();
  g.chol.compute(C);
  if (!factor_ok(g.chol)) throw IllConditioned("correlation matrix factorization failed");
  g.logdet_C = 2.0 * g.chol.matrixLLT().diagonal().array().log().sum();
  g.W = g.chol.matrixL().solve(H);
  Eigen::HouseholderQR<Matrix> qr(g.W);
  g.Rw = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
  const Vector rd = g.Rw.diagonal().cwiseAbs();
  if (!(rd.minCoeff() > 1e-12 * rd.maxCoeff())) throw IllConditioned("basis matrix is rank deficient on the design");
  g.logdet_B = 2.0 * rd.array().log().sum();
  const Matrix Qw = qr.householderQ() * Matrix::Identity(nt, q);
  const Matrix Li = g.chol.matrixL().solve(Matrix::Identity(nt, nt));
  const Matrix QtLi = Qw.transpose() * Li;
  g.P = g.Rw.triangularView<Eigen::Upper>().solve(QtLi);
  const Matrix A = Li - Qw * QtLi;
  g.Q = A.transpose() * A;
  return g;
}

Emulator Emulator::build(DesignSet design, Hyperparameters hyper, const BuildOptions& opts) {
  design.validate();
  hyper.validate(design.dim());
  const Index D = design.dim(), nt = design.augmented_size(), q = basis_size(D);
  if (nt <= q + 2) throw TooFewPoints("emulator needs more observations than basis functions + 2");

  Emulator e;
  e.H_.resize(nt, q);
  e.H_.topRows(design.size()) = basis_block(design.points, 0);
  if (design.has_gradients()) e.H_.bottomRows(nt - design.size()) = basis_block(design.points, 1);

  const Matrix C = design_corr(design, hyper.rho);
  double nugget = hyper.nugget;
  GlsSystem gls;
  for (;;) {
    Matrix Cn = C;
    Cn.diagonal().array() += nugget;
    try {
      gls = factor_gls(Cn, e.H_);
      break;
    } catch (const IllConditioned&) {
      if (!opts.escalate_nugget) throw;
      const double next = nugget > 0.0 ? nugget * 10.0 : 1e-10;
      if (next > opts.max_nugget * (1.0 + 1e-12)) throw;
      nugget = next;
    }
  }
  hyper.nugget = nugget;
  e.chol_ = std::move(gls.chol);
  e.W_ = std::move(gls.W);
  e.Rw_ = std::move(gls.Rw);
  e.B_ = e.Rw_.transpose() * e.Rw_;
  e.P_ = std::move(gls.P);
  e.Q_ = std::move(gls.Q);

  e.u_ = design.stacked_observations();
  e.beta_ = e.P_ * e.u_;
  e.gamma_ = e.Q_ * e.u_;
  // u~ in the span of H~ leaves no residual and sigma^2 = 0.
  const double resid = (e.u_ - e.H_ * e.beta_).cwiseAbs().maxCoeff();
  e.sigma2_degenerate_ = resid <= 1e-9 * std::max(1.0, e.u_.cwiseAbs().maxCoeff());
  e.sigma2_ = e.sigma2_degenerate_ ? 0.0 : std::max(e.u_.dot(e.gamma_), 0.0) / static_cast<double>(nt - q - 2);

  if (design.has_per_datum()) {
    const Matrix U = design.stacked_per_datum();
    e.gfi_ = kernels::centered_gram(U);
    if (U.cols() <= nt) {
      e.gfi_factor_ = U;
      for (Index r = 0; r < nt; ++r) e.gfi_factor_.row(r).array() -= U.row(r).mean();
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(*e.gfi_);
      const Vector lam = es.eigenvalues();
      const double cut = 1e-14 * std::max(lam.maxCoeff(), 0.0);
      Index keep = 0;
      for (Index i = 0; i < nt; ++i) keep += lam(i) > cut ? 1 : 0;
      e.gfi_factor_.resize(nt, keep);
      Index c = 0;
      for (Index i = 0; i < nt; ++i)
        if (lam(i) > cut) e.gfi_factor_.col(c++) = es.eigenvectors().col(i) * std::sqrt(lam(i));
    }
    e.PR_ = e.P_ * e.gfi_factor_;
    e.QR_ = e.Q_ * e.gfi_factor_;
  }

  e.design_ = std::move(design);
  e.hyper_ = std::move(hyper);
  return e;
}

const Matrix& Emulator::gfi() const {
  if (!gfi_) throw MissingPerDatum("emulator was built without per-datum data");
  return *gfi_;
}

Matrix Emulator::cross_corr(const Matrix& E, int order) const {
  if (E.cols() != dim()) throw ShapeMismatch("evaluation points have the wrong dimension");
  const Matrix& X = design_.points;
  if (!design_.has_gradients()) return corr_block(E, X, order, 0, hyper_.rho);
  const Matrix c0 = corr_block(E, X, order, 0, hyper_.rho);
  const Matrix c1 = corr_block(E, X, order, 1, hyper_.rho);
  Matrix C(c0.rows(), augmented_size());
  C << c0, c1;
  return C;
}

Matrix Emulator::linear_map(const Matrix& E, int order) const {
  return basis_block(E, order) * P_ + cross_corr(E, order) * Q_;
}

Prediction Emulator::predict(const Matrix& E, int order, bool with_cov) const {
  Prediction p;
  const Matrix HE = basis_block(E, order);
  const Matrix CE = cross_corr(E, order);
  p.mean = HE * beta_ + CE * gamma_;
  p.dof = augmented_size() - q();
  if (!with_cov) return p;
  if (order == 2) throw Unsupported("predictive covariance of second derivatives is not available");

  const Matrix V = chol_.matrixL().solve(CE.transpose());
  const Matrix R = HE - V.transpose() * W_;
  const Matrix S = Rw_.transpose().triangularView<Eigen::Lower>().solve(R.transpose());
  Matrix Cs = corr_block(E, E, order, order, hyper_.rho) - V.transpose() * V + S.transpose() * S;
  Cs = 0.5 * (Cs + Cs.transpose());
  for (Index i = 0; i < Cs.rows(); ++i) {
    if (Cs(i, i) < -1e-10) throw IllConditioned("negative predictive variance");
    if (Cs(i, i) < 0.0) Cs(i, i) = 0.0;
  }
  p.cov = sigma2_ * Cs;
  return p;
}

Vector Emulator::predictive_correlation(const Matrix& E) const {
  const Matrix HE = basis_block(E, 0);
  const Matrix CE = cross_corr(E, 0);
  const Matrix V = chol_.matrixL().solve(CE.transpose());
  const Matrix R = HE - V.transpose() * W_;
  const Matrix S = Rw_.transpose().triangularView<Eigen::Lower>().solve(R.transpose());
  Vector out(E.rows());
  for (Index i = 0; i < E.rows(); ++i) {
    double v = 1.0 - V.col(i).squaredNorm() + S.col(i).squaredNorm();
    if (v < -1e-10) throw IllConditioned("negative predictive variance");
    out(i) = std::max(v, 0.0);
  }
  return out;
}

Matrix Emulator::factor_map(const Matrix& E, int order) const {
  return basis_block(E, order) * PR_ + cross_corr(E, order) * QR_;
}

std::vector<Matrix> Emulator::predict_efi(const Matrix& E) const {
  if (!gfi_) throw MissingPerDatum("emulated Fisher information needs per-datum data");
  const Index m = E.rows(), D = dim();
  const Matrix T = factor_map(E, 1);
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    Matrix Ti(D, T.cols());
    for (Index k = 0; k < D; ++k) Ti.row(k) = T.row(k * m + i);
    out.push_back(Ti * Ti.transpose());
  }
  return out;
}

std::vector<Tensor3> Emulator::predict_christoffel(const Matrix& E) const {
  if (!gfi_) throw MissingPerDatum("emulated Christoffel symbols need per-datum data");
  const Index m = E.rows(), D = dim();
  const Matrix T1 = factor_map(E, 1);
  const Matrix T2 = factor_map(E, 2);
  std::vector<Tensor3> out;
  out.reserve(static_cast<std::size_t>(m));
  for (Index p = 0; p < m; ++p) {
    Matrix A(D * D, T1.cols()), Bm(D, T1.cols());
    for (Index r = 0; r < D * D; ++r) A.row(r) = T2.row(r * m + p);
    for (Index k = 0; k < D; ++k) Bm.row(k) = T1.row(k * m + p);
    const Matrix G = A * Bm.transpose();
    Tensor3 gam(static_cast<std::size_t>(D), Matrix(D, D));
    for (Index k = 0; k < D; ++k)
      for (Index i = 0; i < D; ++i)
        for (Index j = 0; j < D; ++j) gam[static_cast<std::size_t>(k)](i, j) = G(i * D + j, k);
    out.push_back(std::move(gam));
  }
  return out;
}

double Emulator::potential(const Vector& x) const {
  const Matrix E = x.transpose();
  return (basis_block(E, 0) * beta_ + cross_corr(E, 0) * gamma_)(0);
}

Vector Emulator::gradient(const Vector& x) const {
  const Matrix E = x.transpose();
  return basis_block(E, 1) * beta_ + cross_corr(E, 1) * gamma_;
}

Matrix Emulator::hessian(const Vector& x) const {
  const Matrix E = x.transpose();
  const Vector h = basis_block(E, 2) * beta_ + cross_corr(E, 2) * gamma_;
  const Index D = dim();
  Matrix Hs(D, D);
  for (Index k = 0; k < D; ++k)
    for (Index l = 0; l < D; ++l) Hs(k, l) = h(k * D + l);
  return Hs;
}

void Emulator::fisher_and_christoffel(const Vector& x, Matrix& efi, Tensor3* gamma) const {
  if (!gfi_) throw MissingPerDatum("emulated metric needs per-datum data");
  const Matrix E = x.transpose();
  const Index D = dim();
  const Matrix T1 = factor_map(E, 1);
  efi = T1 * T1.transpose();
  if (!gamma) return;
  const Matrix G = factor_map(E, 2) * T1.transpose();
  gamma->assign(static_cast<std::size_t>(D), Matrix(D, D));
  for (Index k = 0; k < D; ++k)
    for (Index i = 0; i < D; ++i)
      for (Index j = 0; j < D; ++j) (*gamma)[static_cast<std::size_t>(k)](i, j) = G(i * D + j, k);
}

}  // namespace gpemc
