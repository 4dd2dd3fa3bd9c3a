#pragma once

// Hot loops with an OpenMP implementation and a serial reference.
// Both produce bit-identical results: parallel loops only split work over
// independent output entries, and reductions use a fixed chunk grid that does
// not depend on the thread count.

#include "gpemc/core.hpp"

#include <vector>

namespace gpemc::kernels {

enum class Exec { serial, parallel };

/// Number of OpenMP threads available (1 without OpenMP).
int max_threads();

/// Squared-exponential correlation exp(-sum_k rho_k (x_k - y_k)^2) and its
/// derivatives: `a` derivatives on the row point x, `b` on the column point y.
///
/// Rows of A and B are points. Output layout is coordinate-major:
///   order 0 row i               -> i
///   order 1 row (k, i)          -> k*m + i
///   order 2 row (k, l, i)       -> (k*D + l)*m + i
/// with m the number of points on that side; columns likewise.
/// Supported (a, b): a in {0,1,2}, b in {0,1}.
void se_corr_block(const Matrix& A, const Matrix& B, int a, int b, const Vector& rho, Matrix& out,
                   Exec exec = Exec::parallel);

/// Single correlation entry, used as a reference by tests.
/// `row` holds the a derivative coordinates on x, `col` the b coordinates on y.
double se_corr_entry(const double* x, const double* y, const double* rho, Index D, int a, const int* row,
                     int b, const int* col);

/// X J X^T with J = I - 11^T/N the centering projection; rows of X are series.
Matrix centered_gram(const Matrix& X, Exec exec = Exec::parallel);

constexpr Index kReduceChunk = 2048;

/// Deterministic sum of f(j) over [0, n) using a fixed chunk grid.
template <class F>
double chunked_sum(Index n, F&& f, Exec exec = Exec::parallel) {
  const Index chunks = (n + kReduceChunk - 1) / kReduceChunk;
  std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
  const bool par = exec == Exec::parallel && chunks > 1;
#pragma omp parallel for schedule(static) if (par)
  for (Index c = 0; c < chunks; ++c) {
    const Index lo = c * kReduceChunk;
    const Index hi = std::min(n, lo + kReduceChunk);
    double s = 0.0;
    for (Index j = lo; j < hi; ++j) s += f(j);
    partial[static_cast<std::size_t>(c)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

}  // namespace gpemc::kernels
