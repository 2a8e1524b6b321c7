// Serial reference kernels vs the OpenMP versions.
//   bench_kernels --benchmark_filter=gemm
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "noble/kernels.hpp"

namespace k = noble::kernels;

namespace {

std::vector<float> random_values(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::gemm_nn<float>(a, b, c, n, n, n, false);
    } else {
      k::reference::gemm_nn<float>(a, b, c, n, n, n, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
  state.counters["threads"] = Parallel ? k::max_threads() : 1;
}

template <bool Parallel>
void BM_GemmTN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 3), g = random_values(n * n, 4);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::gemm_tn<float>(a, g, c, n, n, n, false);
    } else {
      k::reference::gemm_tn<float>(a, g, c, n, n, n, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  const k::AttentionDims dims{8, static_cast<std::size_t>(state.range(0)), 16};
  const std::size_t size = dims.groups * dims.seq * dims.head_dim;
  const auto q = random_values(size, 5), kk = random_values(size, 6), v = random_values(size, 7);
  const auto dout = random_values(size, 8);
  std::vector<float> out(size), probs(dims.groups * dims.seq * dims.seq);
  std::vector<float> dq(size), dk(size), dv(size);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::attention_forward<float>(q, kk, v, out, probs, dims);
      k::parallel::attention_backward<float>(q, kk, v, probs, dout, dq, dk, dv, dims);
    } else {
      k::reference::attention_forward<float>(q, kk, v, out, probs, dims);
      k::reference::attention_backward<float>(q, kk, v, probs, dout, dq, dk, dv, dims);
    }
    benchmark::DoNotOptimize(dq.data());
  }
}

}  // namespace

BENCHMARK(BM_GemmNN<false>)->Name("gemm_nn/reference")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmNN<true>)->Name("gemm_nn/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmTN<false>)->Name("gemm_tn/reference")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmTN<true>)->Name("gemm_tn/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Attention<false>)->Name("attention_fwd_bwd/reference")->Arg(32)->Arg(128);
BENCHMARK(BM_Attention<true>)->Name("attention_fwd_bwd/parallel")->Arg(32)->Arg(128);

BENCHMARK_MAIN();
