// SPDX-License-Identifier: Apache-2.0
//
// Parallel kernels against their serial references at the shapes the
// nowcast encoder produces. Run with --benchmark_filter to pick a family;
// set OMP_NUM_THREADS to vary the parallel side.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "skycast/kernels.hpp"
#include "skycast/rng.hpp"

namespace {

namespace k = skycast::kernels;

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  skycast::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

using Gemm = void (*)(std::size_t, std::size_t, std::size_t, std::span<const double>, std::span<const double>,
                      std::span<double>, bool);

// Args: m, n, k. Operand layouts follow the kernel's transpose convention,
// so the element counts are the same for all three variants.
template <Gemm G>
void BM_gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = filled(m * kk, 1), b = filled(kk * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    G(m, n, kk, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(m * n * kk),
                                                 benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

// Stem (128 filters, 3x7x7 patch, 64x64 output), b3 (128 <- 64x3x3 at 32x32)
// and the dense layer on a batch of 16 (512 <- 1024).
void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({128, 4096, 147})->Args({128, 1024, 576})->Args({16, 512, 1024})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_gemm<k::gemm_nn>)->Name("gemm_nn/parallel")->Apply(gemm_shapes);
BENCHMARK(BM_gemm<k::serial::gemm_nn>)->Name("gemm_nn/serial")->Apply(gemm_shapes);
BENCHMARK(BM_gemm<k::gemm_nt>)->Name("gemm_nt/parallel")->Apply(gemm_shapes);
BENCHMARK(BM_gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->Apply(gemm_shapes);
BENCHMARK(BM_gemm<k::gemm_tn>)->Name("gemm_tn/parallel")->Apply(gemm_shapes);
BENCHMARK(BM_gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Apply(gemm_shapes);

k::ConvGeometry stem_geometry() {
  k::ConvGeometry g;
  g.channels = 3;
  g.height = g.width = 64;
  g.kernel_h = g.kernel_w = 7;
  g.dilation_h = g.dilation_w = 4;
  g.pad_top = g.pad_left = 12;
  g.out_h = g.out_w = 64;
  return g;
}

template <bool Parallel>
void BM_im2col(benchmark::State& state) {
  const k::ConvGeometry g = stem_geometry();
  const auto image = filled(g.channels * g.height * g.width, 3);
  std::vector<double> col(g.patch_size() * g.out_pixels());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::im2col(g, image, col);
    } else {
      k::serial::im2col(g, image, col);
    }
    benchmark::DoNotOptimize(col.data());
  }
}
BENCHMARK(BM_im2col<true>)->Name("im2col_stem/parallel");
BENCHMARK(BM_im2col<false>)->Name("im2col_stem/serial");

template <bool Parallel>
void BM_col2im(benchmark::State& state) {
  const k::ConvGeometry g = stem_geometry();
  const auto col = filled(g.patch_size() * g.out_pixels(), 4);
  std::vector<double> image(g.channels * g.height * g.width);
  for (auto _ : state) {
    std::fill(image.begin(), image.end(), 0.0);
    if constexpr (Parallel) {
      k::col2im(g, col, image);
    } else {
      k::serial::col2im(g, col, image);
    }
    benchmark::DoNotOptimize(image.data());
  }
}
BENCHMARK(BM_col2im<true>)->Name("col2im_stem/parallel");
BENCHMARK(BM_col2im<false>)->Name("col2im_stem/serial");

template <bool Parallel>
void BM_maxpool(benchmark::State& state) {
  k::PoolGeometry g;
  g.channels = 64;
  g.height = g.width = 64;
  const auto in = filled(g.channels * g.height * g.width, 5);
  std::vector<double> out(g.channels * g.out_h() * g.out_w());
  std::vector<std::uint32_t> argmax(out.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::maxpool2d_forward(g, in, out, argmax);
    } else {
      k::serial::maxpool2d_forward(g, in, out, argmax);
    }
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_maxpool<true>)->Name("maxpool_b2/parallel");
BENCHMARK(BM_maxpool<false>)->Name("maxpool_b2/serial");

}  // namespace

BENCHMARK_MAIN();
