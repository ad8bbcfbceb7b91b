// Serial reference loops against the OpenMP/Eigen kernels on the shapes the
// model actually runs (64x64 input, C = 16, s = 2).
//
//   bench_kernels --benchmark_filter=Conv
//
// The thread argument of the parallel cases is the OpenMP team size.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dahf/kernels.hpp"

using namespace dahf::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 r(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(r);
  return v;
}

ConvGeometry conv_case(int index) {
  switch (index) {
    case 0: return {16, 64, 64, 16, 3, 1, 1};   // branch 0 own path
    case 1: return {32, 32, 32, 32, 3, 1, 1};   // branch 1 own path
    case 2: return {16, 64, 64, 128, 8, 8, 0};  // branch 0 -> 3 resampler
    default: return {64, 16, 16, 64, 3, 1, 1};
  }
}

struct ConvBuffers {
  ConvGeometry g;
  std::vector<double> in, w, b, out, gin, gw, gb;
  explicit ConvBuffers(const ConvGeometry& geo) : g(geo) {
    in = random_vec(static_cast<std::size_t>(g.in_channels) * g.in_height * g.in_width, 1);
    w = random_vec(static_cast<std::size_t>(g.out_channels) * g.patch(), 2);
    b = random_vec(g.out_channels, 3);
    out = random_vec(static_cast<std::size_t>(g.out_channels) * g.out_height() * g.out_width(), 4);
    gin.assign(in.size(), 0.0);
    gw.assign(w.size(), 0.0);
    gb.assign(b.size(), 0.0);
  }
  double flops() const { return 2.0 * g.out_channels * g.out_height() * g.out_width() * g.patch(); }
};

void BM_ConvForwardReference(benchmark::State& state) {
  ConvBuffers c(conv_case(static_cast<int>(state.range(0))));
  for (auto _ : state) {
    reference::conv2d_forward(c.g, c.in, c.w, c.b, c.out);
    benchmark::DoNotOptimize(c.out.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(c.flops() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvForwardParallel(benchmark::State& state) {
  ConvBuffers c(conv_case(static_cast<int>(state.range(0))));
  set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    parallel::conv2d_forward(c.g, c.in, c.w, c.b, c.out);
    benchmark::DoNotOptimize(c.out.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(c.flops() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvBackwardReference(benchmark::State& state) {
  ConvBuffers c(conv_case(static_cast<int>(state.range(0))));
  for (auto _ : state) {
    reference::conv2d_backward(c.g, c.in, c.w, c.out, c.gin, c.gw, c.gb);
    benchmark::DoNotOptimize(c.gin.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2 * c.flops() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvBackwardParallel(benchmark::State& state) {
  ConvBuffers c(conv_case(static_cast<int>(state.range(0))));
  set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    parallel::conv2d_backward(c.g, c.in, c.w, c.out, c.gin, c.gw, c.gb);
    benchmark::DoNotOptimize(c.gin.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2 * c.flops() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

struct AttentionBuffers {
  AttentionGeometry g;
  std::vector<double> q, k, v, out, probs, gq, gk, gv;
  explicit AttentionBuffers(int positions, int channels) {
    g = {channels / 8 > 0 ? channels / 8 : 1, positions, positions, channels};
    q = random_vec(static_cast<std::size_t>(g.dim) * g.queries, 5);
    k = random_vec(static_cast<std::size_t>(g.dim) * g.keys, 6);
    v = random_vec(static_cast<std::size_t>(g.channels) * g.keys, 7);
    out = random_vec(static_cast<std::size_t>(g.channels) * g.queries, 8);
    probs.assign(static_cast<std::size_t>(g.queries) * g.keys, 0.0);
    gq.assign(q.size(), 0.0);
    gk.assign(k.size(), 0.0);
    gv.assign(v.size(), 0.0);
  }
};

void BM_AttentionReference(benchmark::State& state) {
  AttentionBuffers a(static_cast<int>(state.range(0)), 16);
  for (auto _ : state) {
    reference::attention_forward(a.g, a.q, a.k, a.v, a.out, a.probs);
    reference::attention_backward(a.g, a.q, a.k, a.v, a.probs, a.out, a.gq, a.gk, a.gv);
    benchmark::DoNotOptimize(a.gq.data());
  }
}

void BM_AttentionParallel(benchmark::State& state) {
  AttentionBuffers a(static_cast<int>(state.range(0)), 16);
  set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    parallel::attention_forward(a.g, a.q, a.k, a.v, a.out, a.probs);
    parallel::attention_backward(a.g, a.q, a.k, a.v, a.probs, a.out, a.gq, a.gk, a.gv);
    benchmark::DoNotOptimize(a.gq.data());
  }
}

void thread_sweep(benchmark::internal::Benchmark* b, int cases) {
  const int max_threads = num_threads();
  for (int c = 0; c < cases; ++c)
    for (int t = 1; t <= max_threads; t *= 2) b->Args({c, t});
}

}  // namespace

BENCHMARK(BM_ConvForwardReference)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardParallel)->Apply([](auto* b) { thread_sweep(b, 4); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardReference)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardParallel)->Apply([](auto* b) { thread_sweep(b, 4); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionReference)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionParallel)
    ->Apply([](auto* b) {
      const int max_threads = num_threads();
      for (int n : {64, 256, 1024})
        for (int t = 1; t <= max_threads; t *= 2) b->Args({n, t});
    })
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
