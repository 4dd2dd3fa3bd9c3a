#include "gpemc/mle.hpp"

#include "gpemc/rng.hpp"

#include <cmath>
#include <limits>

namespace gpemc {

namespace {

// Prefactors f with entry = f * exp(-sum rho_k Delta_k^2), and their rho
// derivatives. r, c = -1 for a potential observation, else the derivative
// coordinate on the row / column point.
inline double prefactor(int r, int c, const double* rho, const double* dl) {
  if (r < 0 && c < 0) return 1.0;
  if (c < 0) return -2.0 * rho[r] * dl[r];
  if (r < 0) return 2.0 * rho[c] * dl[c];
  return (r == c ? 2.0 * rho[r] : 0.0) - 4.0 * rho[r] * rho[c] * dl[r] * dl[c];
}

inline double prefactor_d(int r, int c, int d, const double* rho, const double* dl) {
  if (r < 0 && c < 0) return 0.0;
  if (c < 0) return d == r ? -2.0 * dl[r] : 0.0;
  if (r < 0) return d == c ? 2.0 * dl[c] : 0.0;
  double v = (d == r && r == c) ? 2.0 : 0.0;
  if (d == r) v -= 4.0 * rho[c] * dl[r] * dl[c];
  if (d == c) v -= 4.0 * rho[r] * dl[r] * dl[c];
  return v;
}

inline double prefactor_de(int r, int c, int d, int e, const double* dl) {
  if (r < 0 || c < 0) return 0.0;
  double v = 0.0;
  if (d == r && e == c) v -= 4.0 * dl[r] * dl[c];
  if (e == r && d == c) v -= 4.0 * dl[r] * dl[c];
  return v;
}

struct Layout {
  Index n, D;
  bool grads;
  Index index(Index i, int r) const { return r < 0 ? i : n + static_cast<Index>(r) * n + i; }
  int coords() const { return grads ? static_cast<int>(D) : 0; }
};

// Visits every entry of the augmented matrix with its (i, j, r, c, Delta, e).
template <class F>
void for_each_entry(const DesignSet& design, const Vector& rho, F&& f) {
  const Layout L{design.size(), design.dim(), design.has_gradients()};
  const Index D = L.D;
  std::vector<double> dl(static_cast<std::size_t>(D)), sq(static_cast<std::size_t>(D));
  for (Index i = 0; i < L.n; ++i)
    for (Index j = 0; j < L.n; ++j) {
      double q = 0.0;
      for (Index k = 0; k < D; ++k) {
        dl[k] = design.points(i, k) - design.points(j, k);
        sq[k] = dl[k] * dl[k];
        q += rho(k) * sq[k];
      }
      const double e = std::exp(-q);
      for (int r = -1; r < L.coords(); ++r)
        for (int c = -1; c < L.coords(); ++c) f(L.index(i, r), L.index(j, c), r, c, dl.data(), sq.data(), e);
    }
}

}  // namespace

Matrix design_corr_drho(const DesignSet& design, const Vector& rho, Index d) {
  const Index nt = design.augmented_size();
  Matrix Cd(nt, nt);
  for_each_entry(design, rho, [&](Index a, Index b, int r, int c, const double* dl, const double* sq, double e) {
    const double f = prefactor(r, c, rho.data(), dl);
    Cd(a, b) = (prefactor_d(r, c, static_cast<int>(d), rho.data(), dl) - sq[d] * f) * e;
  });
  return Cd;
}

LikelihoodEval profile_log_likelihood(const DesignSet& design, const Vector& rho, double nugget, int derivs) {
  design.validate();
  const Index D = design.dim(), nt = design.augmented_size(), q = basis_size(D);
  if (nt <= q + 2) throw TooFewPoints("likelihood needs more observations than basis functions + 2");

  Matrix H(nt, q);
  H.topRows(design.size()) = basis_block(design.points, 0);
  if (design.has_gradients()) H.bottomRows(nt - design.size()) = basis_block(design.points, 1);

  Matrix C(nt, nt);
  for_each_entry(design, rho, [&](Index a, Index b, int r, int c, const double* dl, const double*, double e) {
    C(a, b) = prefactor(r, c, rho.data(), dl) * e;
  });
  C.diagonal().array() += nugget;
  const GlsSystem gls = factor_gls(C, H);
  const double logdetC = gls.logdet_C, logdetB = gls.logdet_B;
  const Matrix& Q = gls.Q;
  const Vector u = design.stacked_observations();
  const Vector g = Q * u;
  const double s = u.dot(g);
  if (!(s > 0.0)) throw IllConditioned("likelihood: residual quadratic form is not positive");
  const double dof = static_cast<double>(nt - q);
  const double sigma2 = s / static_cast<double>(nt - q - 2);

  LikelihoodEval out;
  out.value = -0.5 * dof * std::log(sigma2) - 0.5 * logdetC - 0.5 * logdetB;
  if (!std::isfinite(out.value)) throw IllConditioned("likelihood: non-finite value");
  if (derivs < 1) return out;

  const double alpha = dof / (2.0 * s);
  // Weight matrix of the gradient: dl/drho_d = sum_ij dC_d(i,j) Wt(i,j).
  const Matrix Wt = alpha * g * g.transpose() - 0.5 * Q;
  out.grad = Vector::Zero(D);
  std::vector<Matrix> Cd;
  if (derivs >= 2) Cd.assign(static_cast<std::size_t>(D), Matrix(nt, nt));
  Matrix second = Matrix::Zero(D, D);
  for_each_entry(design, rho, [&](Index a, Index b, int r, int c, const double* dl, const double* sq, double e) {
    const double f = prefactor(r, c, rho.data(), dl);
    const double w = Wt(a, b);
    for (Index d = 0; d < D; ++d) {
      const double fd = prefactor_d(r, c, static_cast<int>(d), rho.data(), dl);
      const double gd = (fd - sq[d] * f) * e;
      out.grad(d) += gd * w;
      if (derivs >= 2) {
        Cd[static_cast<std::size_t>(d)](a, b) = gd;
        for (Index ee = d; ee < D; ++ee) {
          const double fe = prefactor_d(r, c, static_cast<int>(ee), rho.data(), dl);
          const double fde = prefactor_de(r, c, static_cast<int>(d), static_cast<int>(ee), dl);
          const double gde = (fde - sq[ee] * fd - sq[d] * fe + sq[d] * sq[ee] * f) * e;
          second(d, ee) += gde * w;
        }
      }
    }
  });
  if (derivs < 2) return out;

  std::vector<Matrix> M(static_cast<std::size_t>(D));
  std::vector<Vector> v(static_cast<std::size_t>(D));
  Vector a(D);
  for (Index d = 0; d < D; ++d) {
    const auto du = static_cast<std::size_t>(d);
    M[du] = Q * Cd[du];
    v[du] = Cd[du] * g;
    a(d) = g.dot(v[du]);
  }
  out.hess.resize(D, D);
  for (Index d = 0; d < D; ++d)
    for (Index ee = d; ee < D; ++ee) {
      const auto du = static_cast<std::size_t>(d), eu = static_cast<std::size_t>(ee);
      const double tr = (M[du].array() * M[eu].transpose().array()).sum();
      const double h = dof / (2.0 * s * s) * a(d) * a(ee) - 2.0 * alpha * v[du].dot(Q * v[eu]) + 0.5 * tr +
                       second(d, ee);
      out.hess(d, ee) = h;
      out.hess(ee, d) = h;
    }
  return out;
}

Vector default_init_tau(const DesignSet& design) {
  const Index D = design.dim();
  Vector tau(D);
  for (Index d = 0; d < D; ++d) {
    const Vector col = design.points.col(d);
    const double mean = col.mean();
    double var = (col.array() - mean).square().sum() / std::max<Index>(1, col.size() - 1);
    if (!(var > 0.0)) var = 1.0;
    tau(d) = std::log(2.0 * var);
  }
  return tau;
}

namespace {

struct TauEval {
  double f = std::numeric_limits<double>::infinity();  // -l
  Vector g;                                             // d f / d tau
  Matrix H;
  bool ok = false;
};

TauEval eval_tau(const DesignSet& design, const Vector& tau, double nugget) {
  TauEval t;
  try {
    const Vector rho = (-tau.array()).exp();
    const LikelihoodEval le = profile_log_likelihood(design, rho, nugget, 2);
    const Index D = tau.size();
    t.f = -le.value;
    t.g = rho.cwiseProduct(le.grad);  // -(-rho_d dl/drho_d)
    t.H.resize(D, D);
    for (Index d = 0; d < D; ++d)
      for (Index e = 0; e < D; ++e)
        t.H(d, e) = -(rho(d) * rho(e) * le.hess(d, e) + (d == e ? rho(d) * le.grad(d) : 0.0));
    t.ok = std::isfinite(t.f) && t.g.allFinite() && t.H.allFinite();
  } catch (const Error&) {
    t.ok = false;
  }
  return t;
}

// argmin g^T s + s^T H s / 2 subject to |s| <= radius.
Vector trust_region_step(const Matrix& H, const Vector& g, double radius) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  const Vector lam = es.eigenvalues();
  const Vector gh = es.eigenvectors().transpose() * g;
  auto step_norm = [&](double shift) {
    return (gh.array() / (lam.array() + shift)).matrix().norm();
  };
  const double lmin = lam.minCoeff();
  if (lmin > 0.0 && step_norm(0.0) <= radius)
    return -(es.eigenvectors() * (gh.array() / lam.array()).matrix());
  double lo = std::max(0.0, -lmin) + 1e-12 * (1.0 + std::abs(lmin));
  double hi = lo + g.norm() / radius + 1.0;
  while (step_norm(hi) > radius) hi *= 2.0;
  if (step_norm(lo) <= radius) {
    // Hard case: step along the lowest eigenvector to reach the boundary.
    Vector s = -(es.eigenvectors() * (gh.array() / (lam.array() + lo)).matrix());
    const double rem = radius * radius - s.squaredNorm();
    if (rem > 0.0) s += std::sqrt(rem) * es.eigenvectors().col(0);
    return s;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (step_norm(mid) > radius) lo = mid; else hi = mid;
  }
  return -(es.eigenvectors() * (gh.array() / (lam.array() + hi)).matrix());
}

struct RunResult {
  Vector tau;
  TauEval at;
  double pg = std::numeric_limits<double>::infinity();
  int iters = 0;
  bool converged = false;
};

double projected_grad_norm(const Vector& x, const Vector& g, double lo, double hi) {
  double m = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    if (x(i) <= lo && g(i) > 0.0) continue;
    if (x(i) >= hi && g(i) < 0.0) continue;
    m = std::max(m, std::abs(g(i)));
  }
  return m;
}

RunResult optimize_from(const DesignSet& design, Vector x, double nugget, const MleOptions& o) {
  x = x.cwiseMax(o.tau_lo).cwiseMin(o.tau_hi);
  RunResult res;
  res.tau = x;
  res.at = eval_tau(design, x, nugget);
  if (!res.at.ok) return res;
  double radius = 1.0;
  for (int it = 0; it < o.max_iters; ++it) {
    res.iters = it;
    res.pg = projected_grad_norm(res.tau, res.at.g, o.tau_lo, o.tau_hi);
    if (res.pg < o.gtol * (1.0 + std::abs(res.at.f))) {
      res.converged = true;
      return res;
    }
    const Index D = x.size();
    std::vector<Index> freev;
    for (Index i = 0; i < D; ++i) {
      const bool fixed = (res.tau(i) <= o.tau_lo && res.at.g(i) > 0.0) || (res.tau(i) >= o.tau_hi && res.at.g(i) < 0.0);
      if (!fixed) freev.push_back(i);
    }
    const Index nf = static_cast<Index>(freev.size());
    Matrix Hf(nf, nf);
    Vector gf(nf);
    for (Index a = 0; a < nf; ++a) {
      gf(a) = res.at.g(freev[a]);
      for (Index b = 0; b < nf; ++b) Hf(a, b) = res.at.H(freev[a], freev[b]);
    }
    const Vector sf = trust_region_step(Hf, gf, radius);
    Vector xn = res.tau;
    for (Index a = 0; a < nf; ++a) xn(freev[a]) += sf(a);
    xn = xn.cwiseMax(o.tau_lo).cwiseMin(o.tau_hi);
    const Vector s = xn - res.tau;
    const double pred = -(res.at.g.dot(s) + 0.5 * s.dot(res.at.H * s));
    if (!(pred > 0.0) || s.norm() == 0.0) {
      radius *= 0.25;
      if (radius < 1e-12) break;
      continue;
    }
    const TauEval tn = eval_tau(design, xn, nugget);
    const double ratio = tn.ok ? (res.at.f - tn.f) / pred : -1.0;
    if (ratio > 0.1) {
      res.tau = xn;
      res.at = tn;
    }
    if (ratio < 0.25) radius = 0.25 * s.norm();
    else if (ratio > 0.75 && s.norm() >= 0.99 * radius) radius = std::min(2.0 * radius, 10.0);
    if (radius < 1e-12) break;
  }
  res.pg = projected_grad_norm(res.tau, res.at.g, o.tau_lo, o.tau_hi);
  res.converged = res.pg < o.gtol * (1.0 + std::abs(res.at.f));
  return res;
}

}  // namespace

MleResult mle_hyper(const DesignSet& design, const Vector& init_tau, double nugget, const MleOptions& opts) {
  if (init_tau.size() != design.dim()) throw ShapeMismatch("mle_hyper: init_tau length");
  Rng rng(stream_seed(opts.seed, Stream::mle));
  bool have = false;
  RunResult best;
  int total_iters = 0;
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    Vector start = init_tau;
    if (r > 0) start += standard_normal(rng, init_tau.size());
    RunResult rr = optimize_from(design, start, nugget, opts);
    total_iters += rr.iters;
    if (!rr.at.ok) continue;
    const bool better = !have || (rr.converged && !best.converged) ||
                        (rr.converged == best.converged && rr.at.f < best.at.f);
    if (better) {
      best = rr;
      have = true;
    }
  }
  MleResult out;
  out.iterations = total_iters;
  if (!have) {
    out.hyper = Hyperparameters::from_tau(init_tau, nugget);
    out.loglik = -std::numeric_limits<double>::infinity();
    out.warning = "every restart failed to evaluate the likelihood; returning the initial point";
    return out;
  }
  out.hyper = Hyperparameters::from_tau(best.tau, nugget);
  out.loglik = -best.at.f;
  out.grad_norm = best.pg;
  out.converged = best.converged;
  if (!best.converged) out.warning = "no restart met the gradient tolerance; returning the best point seen";
  return out;
}

}  // namespace gpemc
