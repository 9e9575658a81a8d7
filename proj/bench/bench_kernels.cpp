// Serial vs OpenMP paths of the dense kernels and the Monte-Carlo estimators.
// On a single core the two should be within noise of each other.

#include <random>

#include <benchmark/benchmark.h>

#include "graphclip/kernels.hpp"
#include "graphclip/theory.hpp"

using namespace graphclip;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

template <Matrix (*Gemm)(const Matrix&, const Matrix&)>
void BM_gemm(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : st) benchmark::DoNotOptimize(Gemm(a, b));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * n * n));
}

BENCHMARK(BM_gemm<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<kernels::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(256);
BENCHMARK(BM_gemm<kernels::parallel::gemm_nt>)->Name("gemm_nt/parallel")->Arg(256);

void BM_alignment_mc(benchmark::State& st) {
  const auto exec = st.range(0) ? theory::Exec::Parallel : theory::Exec::Serial;
  for (auto _ : st) benchmark::DoNotOptimize(theory::alignment_loss_mc(0.1, 1 << 18, 3, exec));
  st.SetLabel(st.range(0) ? "parallel" : "serial");
}
BENCHMARK(BM_alignment_mc)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
