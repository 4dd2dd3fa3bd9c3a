#include "../support.hpp"

#include <doctest.h>

using namespace gpemc;
using namespace gpemc::test;

namespace {

// U = c + b.x + x^T A x / 2 with a diagonal-plus-offdiagonal A; the basis has no
// cross terms, so the exact quadratic used here is separable.
struct Quadratic {
  double c = 0.7;
  Vector b, a;  // U = c + b.x + sum a_k x_k^2
  double value(const Vector& x) const { return c + b.dot(x) + (a.array() * x.array().square()).sum(); }
  Vector grad(const Vector& x) const { return b + 2.0 * a.cwiseProduct(x); }
  Matrix hess() const { return Matrix(2.0 * a.asDiagonal()); }
};

DesignSet quadratic_design(const Quadratic& q, const Matrix& X) {
  DesignSet d;
  d.points = X;
  d.potentials.resize(X.rows());
  Matrix G(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i) {
    d.potentials(i) = q.value(X.row(i).transpose());
    G.row(i) = q.grad(X.row(i).transpose()).transpose();
  }
  d.gradients = G;
  return d;
}

}  // namespace

TEST_SUITE("gp") {
  TEST_CASE("quadratic basis rows") {
    const Matrix h0 = basis(Vector::Zero(2), 0);
    CHECK(h0.rows() == 1);
    CHECK(h0.row(0) == (Eigen::RowVectorXd(5) << 1, 0, 0, 0, 0).finished());
    const Matrix h1 = basis((Vector(2) << 1, 2).finished(), 1);
    CHECK(h1.row(0) == (Eigen::RowVectorXd(5) << 0, 1, 0, 2, 0).finished());
    CHECK(h1.row(1) == (Eigen::RowVectorXd(5) << 0, 0, 1, 0, 4).finished());
    const Matrix h2 = basis((Vector(2) << 1, 2).finished(), 2);
    REQUIRE(h2.rows() == 4);
    CHECK(h2(0, 3) == 2.0);  // d^2 theta_1^2 / d theta_1^2
    CHECK(h2(3, 4) == 2.0);
    CHECK(h2.row(1).cwiseAbs().sum() == 0.0);
    CHECK(h2.row(2).cwiseAbs().sum() == 0.0);
  }

  TEST_CASE("GLS projection identities on random designs") {
    Rng rng(77);
    for (int t = 0; t < 20; ++t) {
      const Index D = 2 + t % 3;
      const bool grads = t % 2 == 0;
      const Matrix X = uniform_points(rng, 6 + D * 2, D, -2, 2);
      const Emulator em = Emulator::build(smooth_design(X, grads), hyper(uniform_vector(rng, D, 0.5, 2.0)));
      const Index q = em.q();
      CAPTURE(t);
      CHECK((em.P() * em.H() - Matrix::Identity(q, q)).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((em.Q() * em.H()).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((em.Q() - em.Q().transpose()).norm() < 1e-10);
      CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(em.Q()).eigenvalues().minCoeff() > -1e-10);
    }
  }

  TEST_CASE("beta equals the normal-equations GLS solution") {
    Rng rng(78);
    for (bool grads : {false, true}) {
      const Matrix X = uniform_points(rng, 12, 2, -2, 2);
      const DesignSet d = smooth_design(X, grads);
      const Hyperparameters h = hyper((Vector(2) << 0.8, 1.2).finished(), 1e-8);
      const Emulator em = Emulator::build(d, h);
      const Matrix C = design_corr(d, h.rho) + h.nugget * Matrix::Identity(d.augmented_size(), d.augmented_size());
      const Matrix Ci = C.inverse();
      const Matrix H = em.H();
      const Vector beta = (H.transpose() * Ci * H).ldlt().solve(H.transpose() * Ci * d.stacked_observations());
      CHECK(rel_err(em.beta_hat(), beta) < 1e-8);
    }
  }

  TEST_CASE("quadratic potential: zero residual and degenerate sigma2") {
    Quadratic q;
    q.b = (Vector(2) << 0.3, -1.0).finished();
    q.a = (Vector(2) << 0.5, 2.0).finished();
    Rng rng(3);
    const Matrix X = uniform_points(rng, 8, 2, -1.5, 1.5);
    const Emulator em = Emulator::build(quadratic_design(q, X), hyper((Vector(2) << 1.0, 1.0).finished(), 0.0));
    CHECK((em.observations() - em.H() * em.beta_hat()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(em.sigma2_degenerate());
    CHECK(em.sigma2_hat() < 1e-12);
  }

  TEST_CASE("quadratic potential predicted exactly at any point") {
    Quadratic q;
    q.b = (Vector(3) << 0.3, -1.0, 0.2).finished();
    q.a = (Vector(3) << 0.5, 2.0, 1.0).finished();
    Rng rng(4);
    const Emulator em =
        Emulator::build(quadratic_design(q, uniform_points(rng, 7, 3, -1, 1)), hyper(Vector::Constant(3, 0.7)));
    for (int t = 0; t < 10; ++t) {
      const Vector x = uniform_vector(rng, 3, -3, 3);
      CHECK(std::abs(em.potential(x) - q.value(x)) < 1e-8);
      CHECK((em.gradient(x) - q.grad(x)).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((em.hessian(x) - q.hess()).cwiseAbs().maxCoeff() < 1e-8);
    }
  }

  TEST_CASE("interpolation at design points without nugget") {
    Rng rng(5);
    const Matrix X = uniform_points(rng, 8, 2, -2, 2);
    const DesignSet d = smooth_design(X, false);
    BuildOptions bo;
    bo.escalate_nugget = false;
    const Emulator em = Emulator::build(d, hyper((Vector(2) << 1.0, 1.0).finished(), 0.0), bo);
    const Prediction p = em.predict(X, 0, true);
    CHECK((p.mean - d.potentials).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(p.cov.diagonal().cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(p.dof == d.size() - em.q());
  }

  TEST_CASE("predicted gradient is the derivative of the predicted mean") {
    Rng rng(6);
    const Emulator em = Emulator::build(smooth_design(uniform_points(rng, 15, 3, -2, 2), true),
                                        hyper((Vector(3) << 0.6, 1.1, 0.9).finished()));
    for (int t = 0; t < 5; ++t) {
      const Vector x = uniform_vector(rng, 3, -1.5, 1.5);
      const Vector fd = fd_gradient([&](const Vector& v) { return em.potential(v); }, x, 1e-5);
      CHECK(rel_err(em.gradient(x), fd) < 1e-4);
      const Matrix fdh = fd_jacobian([&](const Vector& v) { return em.gradient(v); }, x, 1e-5);
      CHECK(rel_err(em.hessian(x), fdh) < 1e-4);
    }
  }

  TEST_CASE("covariance is symmetric and numerically PSD") {
    Rng rng(7);
    const Emulator em = Emulator::build(smooth_design(uniform_points(rng, 10, 2, -2, 2), true),
                                        hyper((Vector(2) << 0.9, 0.7).finished()));
    const Prediction p = em.predict(uniform_points(rng, 20, 2, -2.5, 2.5), 0, true);
    CHECK((p.cov - p.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.cov.diagonal().minCoeff() >= -1e-10);
  }

  TEST_CASE("emulated empirical Fisher: single datum is zero") {
    const BbdTarget t = BbdTarget::synthetic(2, 1, 1.0, 2.0, 1.0, 1);
    Rng rng(8);
    const Emulator em = Emulator::build(design_from(t, uniform_points(rng, 8, 2, -2, 2)), hyper(Vector::Constant(2, 0.8)));
    REQUIRE(em.has_gfi());
    const std::vector<Matrix> f = em.predict_efi(uniform_points(rng, 3, 2, -1, 1));
    for (const Matrix& m : f) CHECK(m.cwiseAbs().maxCoeff() < 1e-12);
    const std::vector<Tensor3> g = em.predict_christoffel(uniform_points(rng, 2, 2, -1, 1));
    for (const Tensor3& gp : g)
      for (const Matrix& s : gp) CHECK(s.cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("emulated empirical Fisher and Christoffel match column-wise predictions") {
    const BbdTarget t = BbdTarget::synthetic(3 + 1, 40, 1.0, 2.0, 1.0, 2);
    const Index D = 4, N = 40;
    Rng rng(9);
    const DesignSet d = design_from(t, uniform_points(rng, 12, D, -1.5, 1.5));
    const Emulator em = Emulator::build(d, hyper(Vector::Constant(D, 0.5)));
    const Matrix U = d.stacked_per_datum();
    const Matrix J = Matrix::Identity(N, N) - Matrix::Constant(N, N, 1.0 / N);
    for (int p = 0; p < 3; ++p) {
      const Vector x = uniform_vector(rng, D, -1, 1);
      const Matrix E = x.transpose();
      const Matrix DU = em.linear_map(E, 1) * U;   // D x N predicted per-datum gradients
      const Matrix D2U = em.linear_map(E, 2) * U;  // D^2 x N predicted per-datum Hessians
      const Matrix efi = DU * J * DU.transpose();
      const Matrix got = em.predict_efi(E)[0];
      CHECK(rel_err(got, efi) < 1e-8);
      CHECK((got - got.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      const Tensor3 gam = em.predict_christoffel(E)[0];
      double worst = 0.0, sym = 0.0;
      for (Index k = 0; k < D; ++k)
        for (Index i = 0; i < D; ++i)
          for (Index j = 0; j < D; ++j) {
            const double want = D2U.row(i * D + j).dot(J * DU.row(k).transpose());
            worst = std::max(worst, std::abs(gam[static_cast<std::size_t>(k)](i, j) - want) / std::max(1.0, std::abs(want)));
            sym = std::max(sym, std::abs(gam[static_cast<std::size_t>(k)](i, j) - gam[static_cast<std::size_t>(k)](j, i)));
          }
      CHECK(worst < 1e-8);
      CHECK(sym < 1e-10);
    }
  }

  TEST_CASE("derivative information never increases predictive variance") {
    const BbdTarget t = BbdTarget::synthetic(2, 100, 1.0, 2.0, 1.0, 3);
    Rng rng(10);
    const Matrix X = uniform_points(rng, 20, 2, -2, 2);
    const DesignSet with = design_from(t, X);
    const Hyperparameters h = hyper((Vector(2) << 0.5, 0.5).finished());
    const Emulator a = Emulator::build(with, h), b = Emulator::build(with.without_gradients(), h);
    const Matrix E = uniform_points(rng, 50, 2, -2, 2);
    const Vector ca = a.predictive_correlation(E), cb = b.predictive_correlation(E);
    CHECK(((ca - cb).array() <= 1e-10).all());
  }

  TEST_CASE("predicted means are linear in the design values") {
    const BbdTarget t = BbdTarget::synthetic(2, 100, 1.0, 2.0, 1.0, 5);
    Rng rng(11);
    const DesignSet d = design_from(t, uniform_points(rng, 15, 2, -2, 2));
    DesignSet twice = d;
    twice.potentials *= 2.0;
    *twice.gradients *= 2.0;
    const Hyperparameters h = hyper((Vector(2) << 0.6, 0.8).finished());
    const Emulator a = Emulator::build(d, h), b = Emulator::build(twice, h);
    const Matrix E = uniform_points(rng, 30, 2, -2, 2);
    for (int order = 0; order <= 2; ++order) {
      const Vector ma = a.predict(E, order, false).mean, mb = b.predict(E, order, false).mean;
      CHECK((mb - 2.0 * ma).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + ma.cwiseAbs().maxCoeff()));
    }
  }

  TEST_CASE("adding design points never increases predictive variance") {
    const BbdTarget t = BbdTarget::synthetic(2, 100, 1.0, 2.0, 1.0, 6);
    Rng rng(12);
    const Matrix X = uniform_points(rng, 24, 2, -2, 2);
    const DesignSet big = design_from(t, X), small = design_from(t, X.topRows(12));
    const Hyperparameters h = hyper((Vector(2) << 0.7, 0.7).finished());
    const Matrix E = uniform_points(rng, 50, 2, -2, 2);
    for (bool grads : {false, true}) {
      const DesignSet s1 = grads ? small : small.without_gradients(), s2 = grads ? big : big.without_gradients();
      const Vector c1 = Emulator::build(s1, h).predictive_correlation(E), c2 = Emulator::build(s2, h).predictive_correlation(E);
      CHECK(((c2 - c1).array() <= 1e-10).all());
    }
  }

  TEST_CASE("invalid designs are rejected") {
    DesignSet d;
    d.points = (Matrix(2, 2) << 0, 0, 0, 0).finished();
    d.potentials = Vector::Zero(2);
    CHECK_THROWS_AS(d.validate(), ShapeMismatch);
    Hyperparameters h;
    h.rho = (Vector(2) << 1.0, -1.0).finished();
    CHECK_THROWS(h.validate(2));
  }
}
