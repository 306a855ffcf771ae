#include <benchmark/benchmark.h>

#include <vector>

#include "pidaudit/kernels.hpp"
#include "pidaudit/rng.hpp"

using namespace pidaudit;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Square products the size of a training step's projections.
void BM_MatmulReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    kernels::reference::matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void matmul_threads(benchmark::State& state, int threads) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  const int saved = kernels::max_threads();
  kernels::set_max_threads(threads);
  for (auto _ : state) {
    kernels::matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  kernels::set_max_threads(saved);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_MatmulSerial(benchmark::State& state) { matmul_threads(state, 1); }
void BM_MatmulOpenMP(benchmark::State& state) { matmul_threads(state, kernels::max_threads()); }

kernels::AttentionShape attention_shape(benchmark::State& state) {
  return {.windows = static_cast<std::size_t>(state.range(0)), .seq = 64, .heads = 8, .head_dim = 32};
}

void BM_AttentionReference(benchmark::State& state) {
  const auto s = attention_shape(state);
  const std::size_t n = s.windows * s.seq * s.width();
  const auto q = random_values(n, 3), k = random_values(n, 4), v = random_values(n, 5);
  std::vector<double> out(n);
  for (auto _ : state) {
    kernels::reference::attention_forward(q, k, v, s, 0.17677669529663687, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void attention_threads(benchmark::State& state, int threads) {
  const auto s = attention_shape(state);
  const std::size_t n = s.windows * s.seq * s.width();
  const auto q = random_values(n, 3), k = random_values(n, 4), v = random_values(n, 5);
  std::vector<double> out(n), probs(s.weight_count());
  const int saved = kernels::max_threads();
  kernels::set_max_threads(threads);
  for (auto _ : state) {
    kernels::attention_forward(q, k, v, s, 0.17677669529663687, {}, probs, out);
    benchmark::DoNotOptimize(out.data());
  }
  kernels::set_max_threads(saved);
}

void BM_AttentionSerial(benchmark::State& state) { attention_threads(state, 1); }
void BM_AttentionOpenMP(benchmark::State& state) { attention_threads(state, kernels::max_threads()); }

}  // namespace

BENCHMARK(BM_MatmulReference)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulOpenMP)->Arg(64)->Arg(256);
BENCHMARK(BM_AttentionReference)->Arg(4)->Arg(32);
BENCHMARK(BM_AttentionSerial)->Arg(4)->Arg(32);
BENCHMARK(BM_AttentionOpenMP)->Arg(4)->Arg(32);

BENCHMARK_MAIN();
