#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "spn/kernels.hpp"

using namespace spn;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// conv2 of DSPN on a batch of 32: [32*16*16, 288] x [288, 64]
template <bool Reference>
void BM_Gemm(benchmark::State& state) {
  const kernels::GemmArgs args{false, false, static_cast<std::size_t>(state.range(0)),
                               static_cast<std::size_t>(state.range(1)), static_cast<std::size_t>(state.range(2))};
  const auto a = random_vector(args.m * args.k, 1), b = random_vector(args.k * args.n, 2);
  std::vector<double> c(args.m * args.n);
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::gemm(args, a, b, c);
    else
      kernels::gemm(args, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * args.m * args.n * args.k, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Gemm<false>)->Args({8192, 64, 288})->Args({256, 256, 2048})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<true>)->Args({8192, 64, 288})->Args({256, 256, 2048})->Unit(benchmark::kMillisecond);

template <bool Reference>
void BM_Im2col(benchmark::State& state) {
  kernels::ConvGeometry g;
  g.batch = 32;
  g.height = g.width = 32;
  g.channels = static_cast<std::size_t>(state.range(0));
  g.kernel = 3;
  g.pad_top = g.pad_left = 1;
  g.out_height = g.out_width = 32;
  const auto x = random_vector(g.batch * g.height * g.width * g.channels, 3);
  std::vector<double> col(g.rows() * g.patch_size());
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::im2col(g, x, col);
    else
      kernels::im2col(g, x, col);
    benchmark::DoNotOptimize(col.data());
  }
}
BENCHMARK(BM_Im2col<false>)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Im2col<true>)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

template <bool Reference>
void BM_MaxPool(benchmark::State& state) {
  kernels::PoolGeometry g;
  g.batch = 32;
  g.height = g.width = 32;
  g.channels = 32;
  g.out_height = g.out_width = 16;
  const auto x = random_vector(g.batch * g.height * g.width * g.channels, 4);
  std::vector<double> y(g.batch * 16 * 16 * g.channels);
  std::vector<std::size_t> arg(y.size());
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::maxpool_forward(g, x, y, arg);
    else
      kernels::maxpool_forward(g, x, y, arg);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_MaxPool<false>)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaxPool<true>)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
