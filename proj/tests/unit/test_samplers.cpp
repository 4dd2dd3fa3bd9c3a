#include "../support.hpp"

#include "gpemc/diagnostics.hpp"
#include "gpemc/samplers.hpp"

#include <doctest.h>

using namespace gpemc;
using namespace gpemc::test;

namespace {

std::shared_ptr<GaussianTarget> gaussian2() {
  Matrix S(2, 2);
  S << 1.0, 0.5, 0.5, 2.0;
  return std::make_shared<GaussianTarget>((Vector(2) << 1.0, -0.5).finished(), S);
}

std::shared_ptr<BbdTarget> banana() {
  return std::make_shared<BbdTarget>(BbdTarget::synthetic(2, 100, 1.0, 2.0, 1.0, 11));
}

// Gradient provider that fails everywhere.
class BrokenGeometry final : public GeometryProvider {
 public:
  Index dim() const override { return 2; }
  bool has_metric() const override { return false; }
  std::string name() const override { return "broken"; }
  Vector gradient(const Vector&) const override { return Vector::Constant(2, std::nan("")); }
  GeometryPoint evaluate(const Vector& x, GeometryLevel) const override {
    GeometryPoint p;
    p.gradient = gradient(x);
    return p;
  }
};

struct Draws {
  Matrix theta;
  double acceptance = 0.0;
};

Draws run(Sampler& s, const Vector& x0, int burn, int n, std::uint64_t seed) {
  ChainState st = s.init(x0, Rng(seed));
  s.begin_adaptation();
  for (int i = 0; i < burn; ++i) s.step(st);
  s.end_adaptation();
  Draws d;
  d.theta.resize(n, x0.size());
  int acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += s.step(st).accepted;
    d.theta.row(i) = st.theta.transpose();
  }
  d.acceptance = static_cast<double>(acc) / n;
  return d;
}

Vector mc_se(const Matrix& draws) {
  const EssResult e = ess(draws);
  Vector se(draws.cols());
  for (Index d = 0; d < draws.cols(); ++d) {
    const Vector c = draws.col(d);
    se(d) = std::sqrt((c.array() - c.mean()).square().sum() / (c.size() - 1) / e.ess(d));
  }
  return se;
}

// Largest |mean - truth| in units of the Monte Carlo standard error.
double mean_z(const Matrix& draws, const Vector& truth) {
  const Vector m = draws.colwise().mean().transpose();
  return ((m - truth).cwiseAbs().array() / mc_se(draws).array()).maxCoeff();
}

// Two chains, combined standard error.
double mean_gap_z(const Matrix& a, const Matrix& b) {
  const Vector d = (a.colwise().mean() - b.colwise().mean()).transpose();
  const Vector sa = mc_se(a), sb = mc_se(b);
  return (d.cwiseAbs().array() / (sa.array().square() + sb.array().square()).sqrt()).maxCoeff();
}

}  // namespace

TEST_SUITE("samplers") {
  TEST_CASE("kernel names round-trip") {
    for (KernelType k : {KernelType::rwm, KernelType::hmc, KernelType::rhmc, KernelType::lmc})
      CHECK(kernel_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(kernel_from_string("nuts"), std::invalid_argument);
    IntegratorConfig c;
    c.steps = -1;
    CHECK_THROWS(c.validate());
  }

  TEST_CASE("rwm: tiny steps are always accepted and rejections keep theta bitwise") {
    auto t = gaussian2();
    SamplerConfig c;
    c.kernel = KernelType::rwm;
    c.rwm_scale = 1e-9;
    Sampler s(t, std::make_shared<ExactGeometry>(t), c);
    ChainState st = s.init(Vector::Zero(2), Rng(1));
    int acc = 0;
    for (int i = 0; i < 1000; ++i) acc += s.step(st).accepted;
    CHECK(acc >= 995);

    c.rwm_scale = 5.0;
    Sampler big(t, std::make_shared<ExactGeometry>(t), c);
    ChainState b = big.init(Vector::Zero(2), Rng(2));
    int rejections = 0;
    for (int i = 0; i < 500; ++i) {
      const Vector before = b.theta;
      const double u = b.potential;
      if (!big.step(b).accepted) {
        ++rejections;
        CHECK((b.theta.array() == before.array()).all());
        CHECK(b.potential == u);
      }
    }
    CHECK(rejections > 0);
  }

  TEST_CASE("rwm recovers a standard normal mean") {
    auto t = std::make_shared<GaussianTarget>(Vector::Zero(1), Matrix::Identity(1, 1));
    SamplerConfig c;
    c.kernel = KernelType::rwm;
    c.rwm_scale = 2.4;
    Sampler s(t, std::make_shared<ExactGeometry>(t), c);
    ChainState st = s.init(Vector::Zero(1), Rng(3));
    Matrix d(20000, 1);
    for (int i = 0; i < 20000; ++i) {
      s.step(st);
      d(i, 0) = st.theta(0);
    }
    CHECK(mean_z(d, Vector::Zero(1)) < 3.0);
  }

  TEST_CASE("leapfrog: empty trajectory, energy error, reversibility, volume") {
    auto t = std::make_shared<GaussianTarget>(Vector::Zero(1), Matrix::Identity(1, 1));
    ExactGeometry g(t);
    const Matrix I1 = Matrix::Identity(1, 1);
    const Vector x = Vector::Constant(1, 0.8), p = Vector::Constant(1, -0.3);
    const LeapfrogResult z = leapfrog(g, x, p, 0.1, 0, I1);
    CHECK(z.theta == x);
    CHECK(z.p == p);
    const LeapfrogResult e = leapfrog(g, x, p, 0.01, 100, I1);
    CHECK(std::abs(hmc_hamiltonian(t->potential(e.theta), e.p, I1) - hmc_hamiltonian(t->potential(x), p, I1)) < 1e-3);

    auto b = banana();
    ExactGeometry gb(b);
    const Matrix I2 = Matrix::Identity(2, 2);
    const Vector x2 = (Vector(2) << 0.4, 0.6).finished(), p2 = (Vector(2) << 0.7, -1.2).finished();
    const LeapfrogResult f = leapfrog(gb, x2, p2, 0.02, 25, I2);
    const LeapfrogResult r = leapfrog(gb, f.theta, -f.p, 0.02, 25, I2);
    CHECK((r.theta - x2).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((r.p + p2).cwiseAbs().maxCoeff() < 1e-8);
    const Vector z0 = (Vector(4) << x2, p2).finished();
    const Matrix J = fd_jacobian(
        [&](const Vector& zz) {
          const LeapfrogResult o = leapfrog(gb, zz.head(2), zz.tail(2), 0.02, 25, I2);
          return Vector((Vector(4) << o.theta, o.p).finished());
        },
        z0, 1e-6);
    CHECK(std::abs(J.determinant() - 1.0) < 1e-6);
  }

  TEST_CASE("leapfrog rejects non-finite gradients and the sampler counts them") {
    auto t = gaussian2();
    auto g = std::make_shared<BrokenGeometry>();
    CHECK_THROWS_AS(leapfrog(*g, Vector::Zero(2), Vector::Ones(2), 0.1, 3, Matrix::Identity(2, 2)), NonFiniteGradient);
    SamplerConfig c;
    Sampler s(t, g, c);
    ChainState st = s.init(Vector::Zero(2), Rng(4));
    const StepResult r = s.step(st);
    CHECK(r.failed);
    CHECK_FALSE(r.accepted);
    CHECK(s.counters().numerical_rejects == 1);
    CHECK(s.counters().exact_potential_calls == 1);  // only the initial point
  }

  TEST_CASE("hmc: exact potential once per proposal, acceptance near the target, mean recovered") {
    auto t = gaussian2();
    SamplerConfig c;
    c.integrator.epsilon = 0.2;
    c.integrator.steps = 10;
    Sampler s(t, std::make_shared<ExactGeometry>(t), c);
    const Draws d = run(s, Vector::Zero(2), 2000, 20000, 5);
    CHECK(s.counters().exact_potential_calls == 1 + s.counters().proposals - s.counters().numerical_rejects);
    CHECK(d.acceptance >= 0.6);
    CHECK(d.acceptance <= 0.95);
    CHECK(mean_z(d.theta, t->mean()) < 3.0);
  }

  TEST_CASE("non-negative log ratios are always accepted") {
    auto t = banana();
    for (KernelType k : {KernelType::rwm, KernelType::hmc, KernelType::rhmc, KernelType::lmc}) {
      SamplerConfig c;
      c.kernel = k;
      c.integrator.epsilon = 0.2;
      c.integrator.steps = 4;
      Sampler s(t, std::make_shared<ExactGeometry>(t), c);
      ChainState st = s.init((Vector(2) << 0.3, 0.5).finished(), Rng(6));
      int seen = 0;
      for (int i = 0; i < 500; ++i) {
        const StepResult r = s.step(st);
        if (!r.failed && r.log_ratio >= 0.0) {
          ++seen;
          CHECK(r.accepted);
        }
      }
      CHECK(seen > 0);
    }
  }

  TEST_CASE("generalized leapfrog with a constant metric is preconditioned leapfrog") {
    auto t = gaussian2();
    ExactGeometry g(t);
    IntegratorConfig c;
    c.epsilon = 0.15;
    c.steps = 12;
    const Vector x = (Vector(2) << 0.3, 0.2).finished(), p = (Vector(2) << -0.4, 1.0).finished();
    const GeneralizedLeapfrogResult gl = generalized_leapfrog(g, x, p, c);
    const LeapfrogResult lf = leapfrog(g, x, p, c.epsilon, c.steps, t->cov());
    CHECK((gl.theta - lf.theta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((gl.p - lf.p).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(gl.converged);
    // Constant metric: the implicit solves settle after one update.
    for (const auto& tr : gl.residual_traces) CHECK(tr.size() <= 2);
  }

  TEST_CASE("generalized leapfrog: reversibility and contracting fixed points on the banana") {
    auto t = banana();
    ExactGeometry g(t);
    IntegratorConfig c;
    c.epsilon = 0.05;
    c.steps = 10;
    c.fixed_point_iters = 100;
    c.fixed_point_tol = 1e-13;
    const Vector x = (Vector(2) << 0.4, 0.6).finished(), p = (Vector(2) << 1.5, -3.0).finished();
    const GeneralizedLeapfrogResult f = generalized_leapfrog(g, x, p, c);
    REQUIRE(f.converged);
    const GeneralizedLeapfrogResult r = generalized_leapfrog(g, f.theta, -f.p, c);
    CHECK((r.theta - x).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((r.p + p).cwiseAbs().maxCoeff() < 1e-6);

    IntegratorConfig s;
    s.epsilon = 0.01;
    s.steps = 5;
    s.fixed_point_iters = 6;
    s.fixed_point_tol = 1e-300;
    const GeneralizedLeapfrogResult m = generalized_leapfrog(g, x, p, s);
    for (const auto& tr : m.residual_traces) {
      REQUIRE(tr.size() == 6);
      for (std::size_t i = 1; i < tr.size(); ++i)
        if (tr[i - 1] > 1e-15) CHECK(tr[i] <= tr[i - 1]);
    }
  }

  TEST_CASE("rhmc and hmc Hamiltonians differ by a constant for G = cI") {
    auto t = std::make_shared<GaussianTarget>(Vector::Zero(3), Matrix::Identity(3, 3) / 4.0);
    ExactGeometry g(t);
    const RiemannPoint rp = riemann_point(g, Vector::Zero(3));
    const Matrix Minv = Matrix::Identity(3, 3) / 4.0;
    Rng rng(7);
    for (int i = 0; i < 5; ++i) {
      const Vector p = standard_normal(rng, 3);
      const double U = uniform01(rng);
      CHECK(rhmc_hamiltonian(U, rp, p) - hmc_hamiltonian(U, p, Minv) == doctest::Approx(1.5 * std::log(4.0)));
    }
  }

  TEST_CASE("lmc with a constant metric: no volume change, preconditioned leapfrog map") {
    auto t = gaussian2();
    ExactGeometry g(t);
    IntegratorConfig c;
    c.epsilon = 0.1;
    c.steps = 8;
    const Vector x = (Vector(2) << 0.3, 0.2).finished(), v = (Vector(2) << -0.4, 1.0).finished();
    const LmcResult r = lmc_integrator(g, x, v, c);
    CHECK(r.logdet_jacobian == 0.0);
    const Matrix G = t->metric(x);
    const LeapfrogResult lf = leapfrog(g, x, G * v, c.epsilon, c.steps, t->cov());
    CHECK((r.theta - lf.theta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((G * r.v - lf.p).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(lmc_omega(riemann_point(g, x), v).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("lmc log-determinant matches a numerical Jacobian") {
    auto t = banana();
    ExactGeometry g(t);
    IntegratorConfig c;
    c.epsilon = 0.05;
    c.steps = 6;
    const Vector x = (Vector(2) << 0.4, 0.6).finished(), v = (Vector(2) << 0.8, -1.1).finished();
    const LmcResult r = lmc_integrator(g, x, v, c);
    const Vector z0 = (Vector(4) << x, v).finished();
    const Matrix J = fd_jacobian(
        [&](const Vector& zz) {
          const LmcResult o = lmc_integrator(g, zz.head(2), zz.tail(2), c);
          return Vector((Vector(4) << o.theta, o.v).finished());
        },
        z0, 1e-6);
    CHECK(std::abs(std::log(std::abs(J.determinant())) - r.logdet_jacobian) < 1e-4);
    // Small steps: |logdet| shrinks linearly.
    double prev = 0.0;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
      IntegratorConfig one;
      one.epsilon = eps;
      one.steps = 1;
      const double ld = std::abs(lmc_integrator(g, x, v, one).logdet_jacobian);
      if (prev > 0.0) CHECK(ld < 0.2 * prev);
      prev = ld;
      CHECK(ld <= 50.0 * eps);
    }
  }

  TEST_CASE("lmc forward and backward log ratios cancel") {
    auto t = banana();
    ExactGeometry g(t);
    IntegratorConfig c;
    c.epsilon = 0.05;
    c.steps = 5;
    Rng rng(8);
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
      const Vector x = uniform_vector(rng, 2, -1, 1), v = standard_normal(rng, 2);
      const RiemannPoint a = riemann_point(g, x);
      const LmcResult f = lmc_integrator(g, x, v, c, &a);
      const LmcResult b = lmc_integrator(g, f.theta, -f.v, c, &f.end);
      const double lr_f = lmc_energy(t->potential(x), a, v) - lmc_energy(t->potential(f.theta), f.end, f.v) + f.logdet_jacobian;
      const double lr_b =
          lmc_energy(t->potential(f.theta), f.end, -f.v) - lmc_energy(t->potential(b.theta), b.end, b.v) + b.logdet_jacobian;
      worst = std::max(worst, std::abs(lr_f + lr_b));
      CHECK((b.theta - x).cwiseAbs().maxCoeff() < 1e-8);
    }
    CHECK(worst < 1e-8);
  }

  TEST_CASE("lmc on the banana agrees with a long hmc reference") {
    auto t = banana();
    SamplerConfig h;
    h.integrator.epsilon = 0.1;
    h.integrator.steps = 10;
    Sampler hs(t, std::make_shared<ExactGeometry>(t), h);
    const Draws ref = run(hs, Vector::Zero(2), 2000, 60000, 9);
    SamplerConfig l = h;
    l.kernel = KernelType::lmc;
    l.integrator.epsilon = 0.3;
    l.integrator.steps = 5;
    Sampler ls(t, std::make_shared<ExactGeometry>(t), l);
    const Draws d = run(ls, Vector::Zero(2), 1000, 20000, 10);
    CHECK(mean_gap_z(d.theta, ref.theta) < 3.0);
  }

  TEST_CASE("dual averaging moves the step toward the target acceptance") {
    auto t = gaussian2();
    SamplerConfig c;
    c.integrator.epsilon = 2.0;
    c.integrator.steps = 5;
    Sampler s(t, std::make_shared<ExactGeometry>(t), c);
    const Draws d = run(s, Vector::Zero(2), 1500, 4000, 11);
    CHECK(s.step_size() < 2.0);
    CHECK(d.acceptance == doctest::Approx(0.7).epsilon(0.15));
  }

  TEST_CASE("same seed gives the same chain") {
    auto t = banana();
    for (KernelType k : {KernelType::rwm, KernelType::hmc, KernelType::rhmc, KernelType::lmc}) {
      SamplerConfig c;
      c.kernel = k;
      Sampler a(t, std::make_shared<ExactGeometry>(t), c), b(t, std::make_shared<ExactGeometry>(t), c);
      const Draws da = run(a, Vector::Zero(2), 50, 200, 12), db = run(b, Vector::Zero(2), 50, 200, 12);
      CHECK((da.theta.array() == db.theta.array()).all());
    }
  }
}
