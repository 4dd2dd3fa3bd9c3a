#include "../support.hpp"

#include "gpemc/elliptic.hpp"

#include <doctest.h>

using namespace gpemc;
using namespace gpemc::test;

namespace {

double worst_gradient_error(const TargetModel& t, Rng& rng, double lo, double hi, int trials = 20) {
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const Vector x = uniform_vector(rng, t.dim(), lo, hi);
    const Vector g = t.gradient(x);
    Vector fd(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      const double h = 1e-5 * (1.0 + std::abs(x(i)));
      Vector a = x, b = x;
      a(i) += h;
      b(i) -= h;
      fd(i) = (t.potential(a) - t.potential(b)) / (2.0 * h);
    }
    worst = std::max(worst, rel_err(g, fd, 1e-8));
  }
  return worst;
}

}  // namespace

TEST_SUITE("targets") {
  TEST_CASE("banana gradient vanishes at the origin for zero data") {
    BbdTarget t(Vector::Zero(25), 2, 1.0, 1.0);
    CHECK(t.gradient(Vector::Zero(2)).norm() == 0.0);
  }

  TEST_CASE("bbd and banana gradients match finite differences") {
    Rng rng(1);
    CHECK(worst_gradient_error(BbdTarget::synthetic(2, 100, 1.0, 2.0, 1.0, 3), rng, -2, 2) < 1e-6);
    CHECK(worst_gradient_error(BbdTarget::synthetic(4, 500, 1.0, 10.0, 1.0, 4), rng, -2, 2) < 1e-6);
    CHECK(worst_gradient_error(BbdTarget::synthetic(6, 300, 0.5, 3.0, 2.0, 5), rng, -2, 2) < 1e-6);
  }

  TEST_CASE("per-datum gradients sum to the likelihood part of the gradient") {
    const BbdTarget t = BbdTarget::synthetic(4, 200, 1.0, 2.0, 1.5, 9);
    const Vector x = (Vector(4) << 0.3, -0.7, 1.1, 0.2).finished();
    const TargetEval e = t.evaluate(x, true);
    REQUIRE(e.per_datum_gradients.cols() == 200);
    const Vector lik = e.gradient - x / (1.5 * 1.5);
    CHECK(rel_err(e.per_datum_gradients.rowwise().sum(), lik) < 1e-12);
    CHECK(e.per_datum_values.sum() + 0.5 * x.squaredNorm() / (1.5 * 1.5) == doctest::Approx(e.potential).epsilon(1e-12));
  }

  TEST_CASE("bbd Fisher information at the origin") {
    const Index N = 300;
    const double sy = 2.0, st = 1.5;
    const BbdTarget t = BbdTarget::synthetic(4, N, 1.0, sy, st, 2);
    const Vector a = (Vector(4) << 1, 0, 1, 0).finished();
    const Matrix want = (N / (sy * sy)) * a * a.transpose() + Matrix::Identity(4, 4) / (st * st);
    CHECK(rel_err(t.metric(Vector::Zero(4)), want) < 1e-14);
    // The likelihood part is the covariance of per-datum scores under the model:
    // finite differences of the average gradient give N a a^T / sigma_y^2 in expectation.
    const Vector x = (Vector(4) << 0.4, -0.3, 0.8, 0.6).finished();
    const Matrix J = fd_jacobian([&](const Vector& v) { return Vector(t.gradient(v)); }, x, 1e-4);
    const Vector ax = t.mean_gradient(x);
    const Matrix fi = (N / (sy * sy)) * ax * ax.transpose();
    // Hessian = FI + residual-curvature term + prior; the residual term involves only even coordinates' second derivative.
    Matrix curv = Matrix::Zero(4, 4);
    double resid = 0.0;
    for (Index j = 0; j < N; ++j) resid += (t.data()(j) - t.mean_function(x));
    curv(1, 1) = curv(3, 3) = -2.0 * resid / (sy * sy);
    CHECK(rel_err(J, fi + curv + Matrix::Identity(4, 4) / (st * st)) < 1e-6);
  }

  TEST_CASE("bbd metric derivative matches finite differences of the metric") {
    const BbdTarget t = BbdTarget::synthetic(4, 50, 1.0, 2.0, 1.0, 8);
    const Vector x = (Vector(4) << 0.4, -0.3, 0.8, 0.6).finished();
    const Tensor3 dG = t.metric_derivative(x);
    for (Index k = 0; k < 4; ++k) {
      Vector a = x, b = x;
      a(k) += 1e-5;
      b(k) -= 1e-5;
      const Matrix fd = (t.metric(a) - t.metric(b)) / 2e-5;
      CHECK(rel_err(dG[static_cast<std::size_t>(k)], fd, 1e-8) < 1e-7);
    }
  }

  TEST_CASE("empirical Fisher converges to the likelihood Fisher information") {
    const Index N = 10000;
    const BbdTarget t = BbdTarget::synthetic(4, N, 1.0, 2.0, 1.0, 17);
    // Data generated at mu = 1; pick a theta with mean_function = 1.
    const Vector x = (Vector(4) << 0.5, 0.5, 0.25, 0.0).finished();
    REQUIRE(t.mean_function(x) == doctest::Approx(1.0));
    const Matrix efi = t.empirical_fisher(x);
    const Matrix fi = t.metric(x) - Matrix::Identity(4, 4);
    CHECK(rel_err(efi, fi) < 0.05);
    // Symmetric positive semidefinite for every theta.
    Rng rng(3);
    for (int k = 0; k < 10; ++k) {
      const Matrix e = t.empirical_fisher(uniform_vector(rng, 4, -2, 2));
      CHECK((e - e.transpose()).norm() == 0.0);
      CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(e).eigenvalues().minCoeff() > -1e-9 * e.norm());
    }
  }

  TEST_CASE("empirical Fisher is symmetric positive semidefinite") {
    const BbdTarget t = BbdTarget::synthetic(4, 300, 1.0, 10.0, 1.0, 21);
    Rng rng(21);
    for (int k = 0; k < 20; ++k) {
      const Matrix F = t.empirical_fisher(uniform_vector(rng, 4, -2, 2));
      CHECK((F - F.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * F.cwiseAbs().maxCoeff());
      const Eigen::SelfAdjointEigenSolver<Matrix> es(F);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
    }
  }

  TEST_CASE("gaussian target") {
    Matrix S(2, 2);
    S << 2.0, 0.6, 0.6, 0.5;
    GaussianTarget t((Vector(2) << 1.0, -1.0).finished(), S);
    Rng rng(4);
    CHECK(worst_gradient_error(t, rng, -3, 3) < 1e-6);
    CHECK(rel_err(t.metric(Vector::Zero(2)), S.inverse()) < 1e-12);
    CHECK(t.potential(t.mean()) == 0.0);
  }

  TEST_CASE("K-L expansion: ordering, orthonormality, reconstruction") {
    const KlExpansion kl = KlExpansion::compute(0.5, 1.0, 20, 50);
    for (Index d = 1; d < kl.terms(); ++d) CHECK(kl.eigenvalues(d) <= kl.eigenvalues(d - 1));
    CHECK(kl.eigenvalues.minCoeff() > 0.0);
    const Matrix gram = kl.eigenvectors.transpose() * kl.weights.asDiagonal() * kl.eigenvectors;
    CHECK((gram - Matrix::Identity(50, 50)).cwiseAbs().maxCoeff() < 1e-8);
    const Index P = kl.nodes.rows();
    Matrix K(P, P);
    for (Index i = 0; i < P; ++i)
      for (Index j = 0; j < P; ++j) K(i, j) = kl.kernel(kl.nodes(i, 0), kl.nodes(i, 1), kl.nodes(j, 0), kl.nodes(j, 1));
    const Matrix R = kl.eigenvectors * kl.eigenvalues.asDiagonal() * kl.eigenvectors.transpose();
    CHECK(rel_err(K, R) < 0.05);
    CHECK_THROWS_AS(KlExpansion::compute(0.5, 1.0, 2, 10), DegenerateKernel);
  }

  TEST_CASE("elliptic solver: maximum principle at constant diffusivity") {
    auto kl = std::make_shared<const KlExpansion>(KlExpansion::compute(0.5, 1.0, 20, 6));
    EllipticSolver s(20, kl, 11);
    const EllipticSolution sol = s.solve(Vector::Zero(6), false);
    const Index n1 = 21;
    double bmin = 1e300, bmax = -1e300, imin = 1e300, imax = -1e300;
    for (Index j = 0; j < n1; ++j)
      for (Index i = 0; i < n1; ++i) {
        const double u = sol.u(j * n1 + i);
        const bool dirichlet = j == 0 || j == n1 - 1;
        (dirichlet ? bmin : imin) = std::min(dirichlet ? bmin : imin, u);
        (dirichlet ? bmax : imax) = std::max(dirichlet ? bmax : imax, u);
      }
    CHECK(imin >= bmin - 1e-12);
    CHECK(imax <= bmax + 1e-12);
  }

  TEST_CASE("elliptic solver: mirror symmetry") {
    auto kl = std::make_shared<const KlExpansion>(KlExpansion::compute(0.5, 1.0, 20, 6));
    EllipticSolver s(20, kl, 11);
    const Index n1 = 21;
    // Diffusivity symmetric under x1 -> 1 - x1.
    Vector logc(n1 * n1);
    for (Index j = 0; j < n1; ++j)
      for (Index i = 0; i < n1; ++i) {
        const double x1 = i / 20.0, x2 = j / 20.0;
        logc(j * n1 + i) = 0.8 * std::cos(2.0 * M_PI * (x1 - 0.5)) * std::sin(M_PI * x2);
      }
    const Vector u = s.solve_field(logc).u;
    // Swapping x1 -> 1 - x1 exchanges the two Dirichlet profiles, so u(x1, x2) = 1 - u(1 - x1, x2).
    double worst = 0.0;
    for (Index j = 0; j < n1; ++j)
      for (Index i = 0; i < n1; ++i) worst = std::max(worst, std::abs(u(j * n1 + i) - (1.0 - u(j * n1 + (n1 - 1 - i)))));
    CHECK(worst < 1e-10);
  }

  TEST_CASE("elliptic sensitivities match finite differences") {
    auto [t, truth] = EllipticTarget::synthetic({}, 21);
    const Vector x = 0.5 * truth;
    const EllipticSolution sol = t.solver().solve(x, true);
    const Matrix fd =
        fd_jacobian([&](const Vector& v) { return Vector(t.solver().solve(v, false).obs); }, x, 1e-5).transpose();
    CHECK(rel_err(sol.sens, fd) < 1e-4);
    Rng rng(8);
    CHECK(worst_gradient_error(t, rng, -1.5, 1.5, 5) < 1e-5);
  }

  TEST_CASE("elliptic solver self-convergence order") {
    auto kl = std::make_shared<const KlExpansion>(KlExpansion::compute(0.5, 1.0, 20, 6));
    const Vector x = (Vector(6) << 0.8, -0.5, 0.3, 0.6, -0.4, 0.2).finished();
    const Vector ref = EllipticSolver(80, kl, 11).solve(x, false).obs;
    std::vector<double> err;
    for (Index M : {10, 20, 40}) err.push_back((EllipticSolver(M, kl, 11).solve(x, false).obs - ref).cwiseAbs().maxCoeff());
    const double p1 = std::log2(err[0] / err[1]), p2 = std::log2(err[1] / err[2]);
    CAPTURE(p1);
    CAPTURE(p2);
    CHECK(std::min(p1, p2) >= 1.8);
  }
}
