// SPDX-License-Identifier: Apache-2.0
//
// Reference loop nests. Deliberately naive; used by tests and benchmarks.
#include "skycast/kernels.hpp"

#include <limits>

namespace skycast::kernels::serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

void im2col(const ConvGeometry& g, std::span<const double> image, std::span<double> col) {
  const std::size_t npix = g.out_pixels();
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const std::size_t row = (ch * g.kernel_h + ki) * g.kernel_w + kj;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ki * g.dilation_h) -
                            static_cast<std::ptrdiff_t>(g.pad_top);
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kj * g.dilation_w) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            col[row * npix + oy * g.out_w + ox] =
                inside ? image[(ch * g.height + static_cast<std::size_t>(iy)) * g.width +
                               static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> image) {
  const std::size_t npix = g.out_pixels();
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const std::size_t row = (ch * g.kernel_h + ki) * g.kernel_w + kj;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ki * g.dilation_h) -
                            static_cast<std::ptrdiff_t>(g.pad_top);
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kj * g.dilation_w) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                ix >= static_cast<std::ptrdiff_t>(g.width)) {
              continue;
            }
            image[(ch * g.height + static_cast<std::size_t>(iy)) * g.width +
                  static_cast<std::size_t>(ix)] += col[row * npix + oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

void maxpool2d_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                       std::span<std::uint32_t> argmax) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < g.window; ++dy) {
          for (std::size_t dx = 0; dx < g.window; ++dx) {
            const std::size_t idx =
                (ch * g.height + oy * g.stride + dy) * g.width + ox * g.stride + dx;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
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
  const std::size_t n = g.channels * g.out_h() * g.out_w();
  for (std::size_t o = 0; o < n; ++o) grad_in[argmax[o]] += grad_out[o];
}

}  // namespace skycast::kernels::serial
