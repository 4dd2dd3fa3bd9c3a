// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS to vary the pool.
#include "gpemc/kernels.hpp"
#include "gpemc/targets.hpp"

#include <benchmark/benchmark.h>

using namespace gpemc;
using kernels::Exec;

namespace {

Exec mode(const benchmark::State& s) { return s.range(1) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& s) {
  s.SetLabel(s.range(1) ? "openmp x" + std::to_string(kernels::max_threads()) : "serial");
}

// Design correlation with first derivatives on both sides (the (1,1) block).
void BM_CorrBlock(benchmark::State& s) {
  const Index n = s.range(0), D = 4;
  const Matrix A = Matrix::Random(n, D), B = Matrix::Random(n, D);
  const Vector rho = Vector::Constant(D, 0.7);
  Matrix out;
  for (auto _ : s) {
    kernels::se_corr_block(A, B, 1, 1, rho, out, mode(s));
    benchmark::DoNotOptimize(out.data());
  }
  label(s);
}

// Emulated Fisher information from per-datum gradients (D x N).
void BM_CenteredGram(benchmark::State& s) {
  const Matrix X = Matrix::Random(8, s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::centered_gram(X, mode(s)));
  label(s);
}

// Exact BBD potential over N data.
void BM_BbdPotential(benchmark::State& s) {
  const BbdTarget t = BbdTarget::synthetic(4, s.range(0), 1.0, 10.0, 1.0, 1, mode(s));
  const Vector x = Vector::Constant(4, 0.3);
  for (auto _ : s) benchmark::DoNotOptimize(t.potential(x));
  label(s);
}

}  // namespace

BENCHMARK(BM_CorrBlock)->ArgsProduct({{20, 60, 120}, {0, 1}});
BENCHMARK(BM_CenteredGram)->ArgsProduct({{3000, 30000}, {0, 1}});
BENCHMARK(BM_BbdPotential)->ArgsProduct({{3000, 30000, 300000}, {0, 1}});

BENCHMARK_MAIN();
