// SPDX-License-Identifier: Apache-2.0
#include "skycast/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <limits>

namespace skycast::kernels {
namespace {

// Work below this many multiply-adds runs on the calling thread.
constexpr std::size_t kParallelFlops = 1u << 15;

constexpr std::size_t kColBlock = 16;

// Eight doubles; lowered to one AVX-512 register or two AVX2 registers.
using Vec8 = double __attribute__((vector_size(64)));

inline Vec8 load8(const double* p) {
  Vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, Vec8 v) { std::memcpy(p, &v, sizeof v); }

// R rows starting at i0 of a full 16-column block at j0. A(i,p) is read
// row-major ([m,k]) or transposed ([k,m]). Every C element accumulates over
// p in ascending order, lanes only split the column dimension.
template <bool kTransA, std::size_t R>
void micro_kernel(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a,
                  const double* __restrict b, double* __restrict c, bool accumulate, std::size_t i0,
                  std::size_t j0) {
  Vec8 lo[R], hi[R];
  for (std::size_t r = 0; r < R; ++r) {
    if (accumulate) {
      lo[r] = load8(c + (i0 + r) * n + j0);
      hi[r] = load8(c + (i0 + r) * n + j0 + 8);
    } else {
      lo[r] = Vec8{};
      hi[r] = Vec8{};
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const Vec8 b0 = load8(b + p * n + j0);
    const Vec8 b1 = load8(b + p * n + j0 + 8);
    for (std::size_t r = 0; r < R; ++r) {
      const double av = kTransA ? a[p * m + i0 + r] : a[(i0 + r) * k + p];
      lo[r] += av * b0;
      hi[r] += av * b1;
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    store8(c + (i0 + r) * n + j0, lo[r]);
    store8(c + (i0 + r) * n + j0 + 8, hi[r]);
  }
}

template <bool kTransA>
void gemm_columns(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a,
                  const double* __restrict b, double* __restrict c, bool accumulate,
                  std::size_t j0) {
  const std::size_t width = std::min(kColBlock, n - j0);
  std::size_t i0 = 0;
  if (width == kColBlock) {
    for (; i0 + 8 <= m; i0 += 8) micro_kernel<kTransA, 8>(m, n, k, a, b, c, accumulate, i0, j0);
    for (; i0 + 4 <= m; i0 += 4) micro_kernel<kTransA, 4>(m, n, k, a, b, c, accumulate, i0, j0);
    for (; i0 < m; ++i0) micro_kernel<kTransA, 1>(m, n, k, a, b, c, accumulate, i0, j0);
    return;
  }
  for (; i0 < m; ++i0) {
    for (std::size_t j = j0; j < j0 + width; ++j) {
      double sum = accumulate ? c[i0 * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += (kTransA ? a[p * m + i0] : a[i0 * k + p]) * b[p * n + j];
      c[i0 * n + j] = sum;
    }
  }
}

template <bool kTransA>
void gemm_dispatch(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                   double* c, bool accumulate) {
  const std::size_t blocks = (n + kColBlock - 1) / kColBlock;
  const bool parallel = m * n * k >= kParallelFlops && blocks > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t jb = 0; jb < blocks; ++jb) {
    gemm_columns<kTransA>(m, n, k, a, b, c, accumulate, jb * kColBlock);
  }
}

constexpr std::size_t kDotBlock = 4;
constexpr std::size_t kLanes = 8;

double dot(const double* __restrict x, const double* __restrict y, std::size_t k) {
  double lanes[kLanes] = {};
  std::size_t p = 0;
  for (; p + kLanes <= k; p += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += x[p + l] * y[p + l];
  }
  double sum = 0.0;
  for (std::size_t l = 0; l < kLanes; ++l) sum += lanes[l];
  for (; p < k; ++p) sum += x[p] * y[p];
  return sum;
}

// C rows [i0, i0+4) x columns [j0, j0+4) of A*B^T using lane-split dot products.
void dot_block(std::size_t n, std::size_t k, const double* __restrict a,
               const double* __restrict b, double* __restrict c, bool accumulate,
               std::size_t i0, std::size_t j0) {
  double acc[kDotBlock][kDotBlock][kLanes] = {};
  std::size_t p = 0;
  for (; p + kLanes <= k; p += kLanes) {
    for (std::size_t r = 0; r < kDotBlock; ++r) {
      const double* __restrict arow = a + (i0 + r) * k + p;
      for (std::size_t s = 0; s < kDotBlock; ++s) {
        const double* __restrict brow = b + (j0 + s) * k + p;
        for (std::size_t l = 0; l < kLanes; ++l) acc[r][s][l] += arow[l] * brow[l];
      }
    }
  }
  for (std::size_t r = 0; r < kDotBlock; ++r) {
    for (std::size_t s = 0; s < kDotBlock; ++s) {
      double sum = 0.0;
      for (std::size_t l = 0; l < kLanes; ++l) sum += acc[r][s][l];
      for (std::size_t q = p; q < k; ++q) sum += a[(i0 + r) * k + q] * b[(j0 + s) * k + q];
      double& out = c[(i0 + r) * n + j0 + s];
      out = accumulate ? out + sum : sum;
    }
  }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  gemm_dispatch<false>(m, n, k, a.data(), b.data(), c.data(), accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  gemm_dispatch<true>(m, n, k, a.data(), b.data(), c.data(), accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const std::size_t col_blocks = (n + kDotBlock - 1) / kDotBlock;
  const bool parallel = m * n * k >= kParallelFlops && col_blocks > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t jb = 0; jb < col_blocks; ++jb) {
    const std::size_t j0 = jb * kDotBlock;
    const std::size_t j_end = std::min(n, j0 + kDotBlock);
    std::size_t i0 = 0;
    if (j_end - j0 == kDotBlock) {
      for (; i0 + kDotBlock <= m; i0 += kDotBlock) dot_block(n, k, pa, pb, pc, accumulate, i0, j0);
    }
    for (; i0 < m; ++i0) {
      for (std::size_t j = j0; j < j_end; ++j) {
        const double sum = dot(pa + i0 * k, pb + j * k, k);
        pc[i0 * n + j] = accumulate ? pc[i0 * n + j] + sum : sum;
      }
    }
  }
}

void im2col(const ConvGeometry& g, std::span<const double> image, std::span<double> col) {
  const std::size_t npix = g.out_pixels();
  const std::size_t rows = g.patch_size();
  const auto height = static_cast<std::ptrdiff_t>(g.height);
  const auto width = static_cast<std::ptrdiff_t>(g.width);
  const double* src = image.data();
  double* dst = col.data();
#pragma omp parallel for schedule(static) if (rows * npix >= kParallelFlops)
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t kj = row % g.kernel_w;
    const std::size_t ki = (row / g.kernel_w) % g.kernel_h;
    const std::size_t ch = row / (g.kernel_w * g.kernel_h);
    const double* plane = src + ch * g.height * g.width;
    double* out = dst + row * npix;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ki * g.dilation_h) -
                      static_cast<std::ptrdiff_t>(g.pad_top);
      double* orow = out + oy * g.out_w;
      if (iy < 0 || iy >= height) {
        std::fill(orow, orow + g.out_w, 0.0);
        continue;
      }
      const double* irow = plane + iy * width;
      const auto x0 = static_cast<std::ptrdiff_t>(kj * g.dilation_w) -
                      static_cast<std::ptrdiff_t>(g.pad_left);
      if (g.stride_w == 1) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(ox);
          orow[ox] = (ix >= 0 && ix < width) ? irow[ix] : 0.0;
        }
      } else {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(ox * g.stride_w);
          orow[ox] = (ix >= 0 && ix < width) ? irow[ix] : 0.0;
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> image) {
  const std::size_t npix = g.out_pixels();
  const std::size_t taps = g.kernel_h * g.kernel_w;
  const auto height = static_cast<std::ptrdiff_t>(g.height);
  const auto width = static_cast<std::ptrdiff_t>(g.width);
  const double* src = col.data();
  double* dst = image.data();
  // Channels own disjoint image planes, so they can be scattered in parallel.
#pragma omp parallel for schedule(static) if (g.patch_size() * npix >= kParallelFlops)
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    double* plane = dst + ch * g.height * g.width;
    for (std::size_t tap = 0; tap < taps; ++tap) {
      const std::size_t ki = tap / g.kernel_w;
      const std::size_t kj = tap % g.kernel_w;
      const double* in = src + (ch * taps + tap) * npix;
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ki * g.dilation_h) -
                        static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= height) continue;
        double* prow = plane + iy * width;
        const double* crow = in + oy * g.out_w;
        const auto x0 = static_cast<std::ptrdiff_t>(kj * g.dilation_w) -
                        static_cast<std::ptrdiff_t>(g.pad_left);
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(ox * g.stride_w);
          if (ix >= 0 && ix < width) prow[ix] += crow[ox];
        }
      }
    }
  }
}

void maxpool2d_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                       std::span<std::uint32_t> argmax) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
#pragma omp parallel for schedule(static) if (g.channels * oh * ow >= kParallelFlops)
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < g.window; ++dy) {
          const std::size_t base = (ch * g.height + oy * g.stride + dy) * g.width + ox * g.stride;
          for (std::size_t dx = 0; dx < g.window; ++dx) {
            if (in[base + dx] > best) {
              best = in[base + dx];
              best_idx = base + dx;
            }
          }
        }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
}

void maxpool2d_backward(const PoolGeometry& g, std::span<const double> grad_out,
                        std::span<const std::uint32_t> argmax, std::span<double> grad_in) {
  // Each channel scatters only into its own input plane.
  const std::size_t per_channel = g.out_h() * g.out_w();
#pragma omp parallel for schedule(static) if (g.channels * per_channel >= kParallelFlops)
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    for (std::size_t o = ch * per_channel; o < (ch + 1) * per_channel; ++o) {
      grad_in[argmax[o]] += grad_out[o];
    }
  }
}

}  // namespace skycast::kernels
