#include "gpemc/samplers.hpp"

#include <stdexcept>

namespace gpemc {

std::string to_string(KernelType k) {
  switch (k) {
    case KernelType::rwm: return "rwm";
    case KernelType::hmc: return "hmc";
    case KernelType::rhmc: return "rhmc";
    case KernelType::lmc: return "lmc";
  }
  return "?";
}

KernelType kernel_from_string(const std::string& s) {
  if (s == "rwm") return KernelType::rwm;
  if (s == "hmc") return KernelType::hmc;
  if (s == "rhmc") return KernelType::rhmc;
  if (s == "lmc") return KernelType::lmc;
  throw std::invalid_argument("unknown sampler '" + s + "'");
}

void IntegratorConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ShapeMismatch("integrator: epsilon must be positive");
  if (steps < 0) throw ShapeMismatch("integrator: steps must be non-negative");
  if (fixed_point_iters < 1) throw ShapeMismatch("integrator: fixed_point_iters must be >= 1");
  if (!(fixed_point_tol > 0.0)) throw ShapeMismatch("integrator: fixed_point_tol must be positive");
}

// ------------------------------------------------------------ geometry helpers

namespace {

void check_finite(const GeometryPoint& g) {
  bool ok = g.gradient.allFinite() && (g.metric.size() == 0 || g.metric.allFinite());
  for (const Matrix& m : g.dmetric) ok = ok && m.allFinite();
  for (const Matrix& m : g.christoffel) ok = ok && m.allFinite();
  if (!ok) throw NonFiniteGradient("geometry returned non-finite values");
}

Matrix metric_inverse(const Matrix& G, Eigen::LLT<Matrix>& chol) {
  chol.compute(G);
  if (chol.info() != Eigen::Success) throw IllConditioned("metric is not positive definite");
  return chol.solve(Matrix::Identity(G.rows(), G.cols()));
}

Vector nu(const RiemannPoint& rp, const Vector& p) {
  const Vector w = rp.Ginv * p;
  Vector out(p.size());
  for (Index i = 0; i < p.size(); ++i) out(i) = w.dot(rp.geo.dmetric[static_cast<std::size_t>(i)] * w);
  return out;
}

double sup_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

RiemannPoint riemann_point(const GeometryProvider& geo, const Vector& theta) {
  RiemannPoint rp;
  rp.theta = theta;
  rp.geo = geo.evaluate(theta, GeometryLevel::full);
  check_finite(rp.geo);
  rp.Ginv = metric_inverse(rp.geo.metric, rp.chol);
  rp.logdet = 2.0 * rp.chol.matrixLLT().diagonal().array().log().sum();
  const Index D = theta.size();
  rp.grad_phi = rp.geo.gradient;
  for (Index k = 0; k < D; ++k)
    rp.grad_phi(k) += 0.5 * (rp.Ginv.array() * rp.geo.dmetric[static_cast<std::size_t>(k)].array()).sum();
  return rp;
}

Matrix lmc_omega(const RiemannPoint& rp, const Vector& v) {
  const Index D = v.size();
  Matrix A(D, D);
  for (Index m = 0; m < D; ++m) A.row(m) = (rp.geo.christoffel[static_cast<std::size_t>(m)].transpose() * v).transpose();
  return rp.Ginv * A;
}

double hmc_hamiltonian(double U, const Vector& p, const Matrix& mass_inv) { return U + 0.5 * p.dot(mass_inv * p); }

double rhmc_hamiltonian(double U, const RiemannPoint& rp, const Vector& p) {
  return U + 0.5 * rp.logdet + 0.5 * p.dot(rp.Ginv * p);
}

double lmc_energy(double U, const RiemannPoint& rp, const Vector& v) {
  return U - 0.5 * rp.logdet + 0.5 * v.dot(rp.geo.metric * v);
}

// ------------------------------------------------------------ integrators

LeapfrogResult leapfrog(const GeometryProvider& geo, const Vector& theta, const Vector& p, double eps, int steps,
                        const Matrix& mass_inv, const Vector* grad0) {
  LeapfrogResult r{theta, p, grad0 ? *grad0 : geo.gradient(theta)};
  if (!r.grad.allFinite()) throw NonFiniteGradient("leapfrog: non-finite gradient");
  for (int l = 0; l < steps; ++l) {
    r.p -= 0.5 * eps * r.grad;
    r.theta += eps * (mass_inv * r.p);
    r.grad = geo.gradient(r.theta);
    if (!r.grad.allFinite()) throw NonFiniteGradient("leapfrog: non-finite gradient");
    r.p -= 0.5 * eps * r.grad;
  }
  return r;
}

GeneralizedLeapfrogResult generalized_leapfrog(const GeometryProvider& geo, const Vector& theta, const Vector& p,
                                               const IntegratorConfig& cfg, const RiemannPoint* start) {
  cfg.validate();
  GeneralizedLeapfrogResult r;
  r.theta = theta;
  r.p = p;
  r.end = start ? *start : riemann_point(geo, theta);
  const double h = 0.5 * cfg.epsilon;
  for (int l = 0; l < cfg.steps; ++l) {
    const RiemannPoint& cur = r.end;
    // p^{l+1/2} = p - h [grad phi - nu(theta, p^{l+1/2}) / 2]
    Vector ph = r.p;
    std::vector<double> trace;
    bool conv = false;
    for (int it = 0; it < cfg.fixed_point_iters; ++it) {
      Vector next = r.p - h * (cur.grad_phi - 0.5 * nu(cur, ph));
      if (!next.allFinite()) throw FixedPointDivergence("generalized leapfrog: momentum iterate diverged");
      trace.push_back(sup_norm(next - ph));
      ph = std::move(next);
      if (trace.back() < cfg.fixed_point_tol) { conv = true; break; }
    }
    r.converged = r.converged && conv;
    r.residual_traces.push_back(std::move(trace));

    // theta^{l+1} = theta + h [G^{-1}(theta) + G^{-1}(theta^{l+1})] p^{l+1/2}
    const Vector a = cur.Ginv * ph;
    Vector th = r.theta + 2.0 * h * a;
    trace.clear();
    conv = false;
    for (int it = 0; it < cfg.fixed_point_iters; ++it) {
      const GeometryPoint gp = geo.evaluate(th, GeometryLevel::metric);
      if (!gp.metric.allFinite()) throw FixedPointDivergence("generalized leapfrog: metric iterate non-finite");
      Eigen::LLT<Matrix> chol(gp.metric);
      if (chol.info() != Eigen::Success) throw FixedPointDivergence("generalized leapfrog: metric lost definiteness");
      Vector next = r.theta + h * (a + chol.solve(ph));
      if (!next.allFinite()) throw FixedPointDivergence("generalized leapfrog: position iterate diverged");
      trace.push_back(sup_norm(next - th));
      th = std::move(next);
      if (trace.back() < cfg.fixed_point_tol) { conv = true; break; }
    }
    r.converged = r.converged && conv;
    r.residual_traces.push_back(std::move(trace));

    RiemannPoint nxt = riemann_point(geo, th);
    r.p = ph - h * (nxt.grad_phi - 0.5 * nu(nxt, ph));
    r.theta = th;
    r.end = std::move(nxt);
    if (!r.p.allFinite()) throw FixedPointDivergence("generalized leapfrog: momentum non-finite");
  }
  return r;
}

namespace {

// Solves (I + h Omega) x = b and returns log|det(I + h Omega)|.
double shifted_solve(const Matrix& Omega, double h, const Vector& b, Vector& x) {
  const Index D = Omega.rows();
  const Matrix A = Matrix::Identity(D, D) + h * Omega;
  Eigen::PartialPivLU<Matrix> lu(A);
  if (!(lu.rcond() > 1e-12)) throw SingularUpdate("lmc: I + (eps/2) Omega is singular");
  x = lu.solve(b);
  return std::log(std::abs(lu.determinant()));
}

double log_abs_det(const Matrix& A) {
  Eigen::PartialPivLU<Matrix> lu(A);
  const double d = std::abs(lu.determinant());
  if (!(d > 0.0) || !std::isfinite(d)) throw SingularUpdate("lmc: degenerate Jacobian factor");
  return std::log(d);
}

}  // namespace

LmcResult lmc_integrator(const GeometryProvider& geo, const Vector& theta, const Vector& v, const IntegratorConfig& cfg,
                         const RiemannPoint* start) {
  cfg.validate();
  LmcResult r;
  r.theta = theta;
  r.v = v;
  r.end = start ? *start : riemann_point(geo, theta);
  const double h = 0.5 * cfg.epsilon;
  const Index D = theta.size();
  const Matrix I = Matrix::Identity(D, D);
  for (int l = 0; l < cfg.steps; ++l) {
    const RiemannPoint& cur = r.end;
    Vector vh;
    double ld = -shifted_solve(lmc_omega(cur, r.v), h, r.v - h * (cur.Ginv * cur.grad_phi), vh);
    ld += log_abs_det(I - h * lmc_omega(cur, vh));
    const Vector th = r.theta + cfg.epsilon * vh;
    RiemannPoint nxt = riemann_point(geo, th);
    Vector vn;
    ld -= shifted_solve(lmc_omega(nxt, vh), h, vh - h * (nxt.Ginv * nxt.grad_phi), vn);
    ld += log_abs_det(I - h * lmc_omega(nxt, vn));
    if (!vn.allFinite() || !std::isfinite(ld)) throw SingularUpdate("lmc: non-finite update");
    r.theta = th;
    r.v = std::move(vn);
    r.end = std::move(nxt);
    r.logdet_jacobian += ld;
  }
  return r;
}

// ------------------------------------------------------------ dual averaging

DualAveraging::DualAveraging(double initial, double target)
    : mu_(std::log(10.0 * initial)), target_(target), log_x_(std::log(initial)) {
  if (!(initial > 0.0)) throw ShapeMismatch("dual averaging: initial step must be positive");
}

void DualAveraging::update(double accept_prob) {
  if (!std::isfinite(accept_prob)) accept_prob = 0.0;
  ++t_;
  const double t = static_cast<double>(t_);
  const double eta = 1.0 / (t + kT0);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
  log_x_ = mu_ - std::sqrt(t) / kGamma * h_bar_;
  log_x_ = std::clamp(log_x_, mu_ - 25.0, mu_ + 5.0);
  const double w = std::pow(t, -kKappa);
  log_x_bar_ = w * log_x_ + (1.0 - w) * log_x_bar_;
}

// ------------------------------------------------------------ sampler

Sampler::Sampler(std::shared_ptr<const TargetModel> target, std::shared_ptr<const GeometryProvider> geometry,
                 SamplerConfig cfg)
    : target_(std::move(target)), geometry_(std::move(geometry)), cfg_(std::move(cfg)) {
  const Index D = target_->dim();
  if (geometry_->dim() != D) throw ShapeMismatch("sampler: geometry and target dimensions differ");
  if (cfg_.kernel == KernelType::rwm) {
    if (!(cfg_.rwm_scale > 0.0)) throw ShapeMismatch("sampler: rwm_scale must be positive");
  } else {
    cfg_.integrator.validate();
  }
  if ((cfg_.kernel == KernelType::rhmc || cfg_.kernel == KernelType::lmc) && !geometry_->has_metric())
    throw Unsupported("sampler: " + to_string(cfg_.kernel) + " needs a geometry with a metric");
  const Matrix M = cfg_.mass ? *cfg_.mass : Matrix::Identity(D, D);
  if (M.rows() != D || M.cols() != D) throw ShapeMismatch("sampler: mass matrix shape");
  Eigen::LLT<Matrix> chol(M);
  if (chol.info() != Eigen::Success) throw IllConditioned("sampler: mass matrix is not positive definite");
  mass_chol_ = chol.matrixL();
  mass_inv_ = chol.solve(Matrix::Identity(D, D));
}

double Sampler::exact_potential(const Vector& theta) {
  ++counters_.exact_potential_calls;
  return target_->potential(theta);
}

ChainState Sampler::init(const Vector& theta, Rng rng) {
  if (theta.size() != target_->dim()) throw ShapeMismatch("sampler: initial point dimension");
  ChainState s;
  s.theta = theta;
  s.rng = rng;
  s.potential = exact_potential(theta);
  if (!std::isfinite(s.potential)) throw NonFiniteGradient("sampler: non-finite potential at the initial point");
  return s;
}

void Sampler::set_geometry(std::shared_ptr<const GeometryProvider> geometry) {
  if (geometry->dim() != target_->dim()) throw ShapeMismatch("sampler: geometry dimension");
  geometry_ = std::move(geometry);
  ++version_;
}

double Sampler::step_size() const {
  return cfg_.kernel == KernelType::rwm ? cfg_.rwm_scale : cfg_.integrator.epsilon;
}

void Sampler::set_step_size(double s) {
  if (!(s > 0.0)) throw ShapeMismatch("sampler: step size must be positive");
  if (cfg_.kernel == KernelType::rwm) cfg_.rwm_scale = s; else cfg_.integrator.epsilon = s;
}

void Sampler::begin_adaptation() {
  adapt_.emplace(step_size(), cfg_.kernel == KernelType::rwm ? cfg_.rwm_target_accept : cfg_.target_accept);
}

void Sampler::end_adaptation() {
  if (adapt_) set_step_size(adapt_->averaged());
  adapt_.reset();
}

const Vector& Sampler::cached_grad(ChainState& s) {
  if (s.cache_version != version_) { s.grad.reset(); s.riemann.reset(); s.cache_version = version_; }
  if (!s.grad) s.grad = geometry_->gradient(s.theta);
  return *s.grad;
}

const RiemannPoint& Sampler::cached_riemann(ChainState& s) {
  if (s.cache_version != version_) { s.grad.reset(); s.riemann.reset(); s.cache_version = version_; }
  if (!s.riemann) s.riemann = riemann_point(*geometry_, s.theta);
  return *s.riemann;
}

bool Sampler::metropolis(ChainState& s, double log_ratio) {
  const double u = uniform01(s.rng);
  return std::isfinite(log_ratio) ? std::log(u) < log_ratio : log_ratio > 0.0;
}

StepResult Sampler::step(ChainState& s) {
  ++counters_.proposals;
  StepResult r;
  switch (cfg_.kernel) {
    case KernelType::rwm: r = step_rwm(s); break;
    case KernelType::hmc: r = step_hmc(s); break;
    case KernelType::rhmc: r = step_rhmc(s); break;
    case KernelType::lmc: r = step_lmc(s); break;
  }
  if (r.failed) ++counters_.numerical_rejects;
  if (r.accepted) ++counters_.accepted;
  if (adapt_) {
    const double a = r.failed ? 0.0 : std::exp(std::min(0.0, r.log_ratio));
    adapt_->update(std::isfinite(a) ? a : 0.0);
    set_step_size(adapt_->current());
  }
  return r;
}

StepResult Sampler::step_rwm(ChainState& s) {
  StepResult r;
  const Vector prop = s.theta + cfg_.rwm_scale * standard_normal(s.rng, s.theta.size());
  double U1;
  try {
    U1 = exact_potential(prop);
  } catch (const Error&) {
    r.failed = true;
    uniform01(s.rng);
    return r;
  }
  r.log_ratio = s.potential - U1;
  if (metropolis(s, r.log_ratio)) {
    s.theta = prop;
    s.potential = U1;
    s.grad.reset();
    s.riemann.reset();
    r.accepted = true;
  }
  return r;
}

StepResult Sampler::step_hmc(ChainState& s) {
  StepResult r;
  const Vector p0 = mass_chol_ * standard_normal(s.rng, s.theta.size());
  LeapfrogResult lf;
  double U1;
  try {
    const Vector& g0 = cached_grad(s);
    lf = leapfrog(*geometry_, s.theta, p0, cfg_.integrator.epsilon, cfg_.integrator.steps, mass_inv_, &g0);
    U1 = exact_potential(lf.theta);
  } catch (const Error&) {
    r.failed = true;
    uniform01(s.rng);
    return r;
  }
  r.log_ratio = hmc_hamiltonian(s.potential, p0, mass_inv_) - hmc_hamiltonian(U1, lf.p, mass_inv_);
  if (metropolis(s, r.log_ratio)) {
    s.theta = lf.theta;
    s.potential = U1;
    s.grad = lf.grad;
    s.riemann.reset();
    r.accepted = true;
  }
  return r;
}

StepResult Sampler::step_rhmc(ChainState& s) {
  StepResult r;
  const Vector z = standard_normal(s.rng, s.theta.size());
  GeneralizedLeapfrogResult gl;
  double U1, H0;
  try {
    const RiemannPoint& rp = cached_riemann(s);
    const Vector p0 = rp.chol.matrixL() * z;
    H0 = rhmc_hamiltonian(s.potential, rp, p0);
    gl = generalized_leapfrog(*geometry_, s.theta, p0, cfg_.integrator, &rp);
    if (!gl.converged) ++counters_.fixed_point_unconverged;
    U1 = exact_potential(gl.theta);
  } catch (const Error&) {
    r.failed = true;
    uniform01(s.rng);
    return r;
  }
  r.log_ratio = H0 - rhmc_hamiltonian(U1, gl.end, gl.p);
  if (metropolis(s, r.log_ratio)) {
    s.theta = gl.theta;
    s.potential = U1;
    s.grad = gl.end.geo.gradient;
    s.riemann = std::move(gl.end);
    r.accepted = true;
  }
  return r;
}

StepResult Sampler::step_lmc(ChainState& s) {
  StepResult r;
  const Vector z = standard_normal(s.rng, s.theta.size());
  LmcResult lm;
  double U1, E0;
  try {
    const RiemannPoint& rp = cached_riemann(s);
    const Vector v0 = rp.chol.matrixU().solve(z);
    E0 = lmc_energy(s.potential, rp, v0);
    lm = lmc_integrator(*geometry_, s.theta, v0, cfg_.integrator, &rp);
    U1 = exact_potential(lm.theta);
  } catch (const Error&) {
    r.failed = true;
    uniform01(s.rng);
    return r;
  }
  r.log_ratio = E0 - lmc_energy(U1, lm.end, lm.v) + lm.logdet_jacobian;
  if (metropolis(s, r.log_ratio)) {
    s.theta = lm.theta;
    s.potential = U1;
    s.grad = lm.end.geo.gradient;
    s.riemann = std::move(lm.end);
    r.accepted = true;
  }
  return r;
}

}  // namespace gpemc
