#include "gpemc/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gpemc::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

struct BlockShape {
  Index D, mA, nB;
  int a, b;
};

// Fills every entry contributed by the point pair (i, j).
// g_k = 2 rho_k (x_k - y_k) is the derivative of the exponent w.r.t. y_k.
inline void fill_pair(const BlockShape& s, Index i, Index j, const double* x, const double* y,
                      const double* rho, double* g, Matrix& out) {
  const Index D = s.D;
  double q = 0.0;
  for (Index k = 0; k < D; ++k) {
    const double d = x[k] - y[k];
    q += rho[k] * d * d;
    g[k] = 2.0 * rho[k] * d;
  }
  const double e = std::exp(-q);
  const Index mA = s.mA, nB = s.nB;

  switch (s.a * 2 + s.b) {
    case 0:  // (0,0)
      out(i, j) = e;
      break;
    case 1:  // (0,1)
      for (Index m = 0; m < D; ++m) out(i, m * nB + j) = g[m] * e;
      break;
    case 2:  // (1,0)
      for (Index k = 0; k < D; ++k) out(k * mA + i, j) = -g[k] * e;
      break;
    case 3:  // (1,1)
      for (Index k = 0; k < D; ++k)
        for (Index m = 0; m < D; ++m) {
          const double diag = (k == m) ? 2.0 * rho[k] : 0.0;
          out(k * mA + i, m * nB + j) = (diag - g[k] * g[m]) * e;
        }
      break;
    case 4:  // (2,0)
      for (Index k = 0; k < D; ++k)
        for (Index l = k; l < D; ++l) {
          const double diag = (k == l) ? -2.0 * rho[k] : 0.0;
          const double v = (diag + g[k] * g[l]) * e;
          out((k * D + l) * mA + i, j) = v;
          out((l * D + k) * mA + i, j) = v;
        }
      break;
    case 5:  // (2,1)
      for (Index k = 0; k < D; ++k)
        for (Index l = k; l < D; ++l)
          for (Index m = 0; m < D; ++m) {
            double v = g[k] * g[l] * g[m];
            if (k == l) v -= 2.0 * rho[k] * g[m];
            if (l == m) v -= 2.0 * rho[l] * g[k];
            if (m == k) v -= 2.0 * rho[m] * g[l];
            v *= e;
            out((k * D + l) * mA + i, m * nB + j) = v;
            out((l * D + k) * mA + i, m * nB + j) = v;
          }
      break;
    default:
      break;
  }
}

Index side_size(Index m, Index D, int order) {
  Index r = m;
  for (int o = 0; o < order; ++o) r *= D;
  return r;
}

}  // namespace

void se_corr_block(const Matrix& A, const Matrix& B, int a, int b, const Vector& rho, Matrix& out,
                   Exec exec) {
  if (A.cols() != B.cols() || rho.size() != A.cols())
    throw ShapeMismatch("se_corr_block: point dimensions differ");
  if (a < 0 || a > 2 || b < 0 || b > 1) throw Unsupported("se_corr_block: orders (a,b) must satisfy a<=2, b<=1");
  const Index D = A.cols(), mA = A.rows(), nB = B.rows();
  out.resize(side_size(mA, D, a), side_size(nB, D, b));
  const BlockShape s{D, mA, nB, a, b};

  // Row-major copies so each point is contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Ar = A, Br = B;
  const bool par = exec == Exec::parallel && mA * nB >= 64;

#pragma omp parallel if (par)
  {
    std::vector<double> g(static_cast<std::size_t>(D));
#pragma omp for schedule(static)
    for (Index i = 0; i < mA; ++i)
      for (Index j = 0; j < nB; ++j) fill_pair(s, i, j, Ar.row(i).data(), Br.row(j).data(), rho.data(), g.data(), out);
  }
}

double se_corr_entry(const double* x, const double* y, const double* rho, Index D, int a, const int* row,
                     int b, const int* col) {
  double q = 0.0;
  for (Index k = 0; k < D; ++k) q += rho[k] * (x[k] - y[k]) * (x[k] - y[k]);
  const double e = std::exp(-q);
  auto rr = [&](int k) { return rho[k]; };
  auto dd = [&](int k) { return x[k] - y[k]; };
  auto delta = [](int p, int r) { return p == r ? 1.0 : 0.0; };
  if (a == 0 && b == 0) return e;
  if (a == 1 && b == 0) return -2.0 * rr(row[0]) * dd(row[0]) * e;
  if (a == 0 && b == 1) return 2.0 * rr(col[0]) * dd(col[0]) * e;
  if (a == 1 && b == 1) {
    const int k = row[0], l = col[0];
    return (2.0 * rr(k) * delta(k, l) - 4.0 * rr(k) * rr(l) * dd(k) * dd(l)) * e;
  }
  if (a == 2 && b == 0) {
    const int k = row[0], l = row[1];
    return (-2.0 * rr(k) * delta(k, l) + 4.0 * rr(k) * rr(l) * dd(k) * dd(l)) * e;
  }
  if (a == 2 && b == 1) {
    const int k = row[0], l = row[1], m = col[0];
    return (-4.0 * delta(k, l) * rr(m) * rr(k) * dd(m) - 4.0 * delta(l, m) * rr(k) * rr(l) * dd(k) -
            4.0 * delta(m, k) * rr(l) * rr(m) * dd(l) + 8.0 * rr(k) * rr(l) * rr(m) * dd(k) * dd(l) * dd(m)) *
           e;
  }
  throw Unsupported("se_corr_entry: unsupported order pair");
}

Matrix centered_gram(const Matrix& X, Exec exec) {
  const Index n = X.rows(), N = X.cols();
  Matrix out = Matrix::Zero(n, n);
  if (N == 0) return out;
  // Columns of Y are the centered series, contiguous in memory.
  Matrix Y = X.transpose();
  for (Index r = 0; r < n; ++r) Y.col(r).array() -= Y.col(r).mean();
  const bool par = exec == Exec::parallel && n * n * N >= (1 << 16);
#pragma omp parallel for schedule(dynamic, 4) if (par)
  for (Index r = 0; r < n; ++r)
    for (Index s = r; s < n; ++s) {
      const double v = Y.col(r).dot(Y.col(s));
      out(r, s) = v;
      out(s, r) = v;
    }
  return out;
}

}  // namespace gpemc::kernels
