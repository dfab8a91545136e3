// SPDX-License-Identifier: Apache-2.0
//
// Dense numeric kernels behind the tensor ops. Every kernel exists twice:
// the OpenMP-parallel, register-blocked version in `skycast::kernels` used
// by the library, and a plain loop nest in `skycast::kernels::serial` kept
// as the reference the parallel version is tested and benchmarked against.
//
// All matrices are row-major and densely packed (leading dimension equals
// the column count).
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace skycast::kernels {

/// Geometry of one 2-D convolution over a single [C,H,W] image.
struct ConvGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t dilation_h = 1;
  std::size_t dilation_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  std::size_t patch_size() const { return channels * kernel_h * kernel_w; }
  std::size_t out_pixels() const { return out_h * out_w; }
};

/// Geometry of a max-pooling pass over a single [C,H,W] image.
struct PoolGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t window = 2;
  std::size_t stride = 2;

  std::size_t out_h() const { return height < window ? 0 : (height - window) / stride + 1; }
  std::size_t out_w() const { return width < window ? 0 : (width - window) / stride + 1; }
};

// C[m,n] = (accumulate ? C : 0) + A[m,k] * B[k,n].
// Each C element accumulates its k products in ascending k order, so
// appending zero products (e.g. zero-inflated kernels) never changes a bit.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// C[m,n] = (accumulate ? C : 0) + A[m,k] * B[n,k]^T.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// C[m,n] = (accumulate ? C : 0) + A[k,m]^T * B[k,n].
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// col is [patch_size, out_pixels]; out-of-image taps are written as 0.
void im2col(const ConvGeometry& g, std::span<const double> image, std::span<double> col);

// Scatter-adds col back onto image (the adjoint of im2col).
void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> image);

void maxpool2d_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                       std::span<std::uint32_t> argmax);

// Adds each output gradient onto the input position that won the max.
void maxpool2d_backward(const PoolGeometry& g, std::span<const double> grad_out,
                        std::span<const std::uint32_t> argmax, std::span<double> grad_in);

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void im2col(const ConvGeometry& g, std::span<const double> image, std::span<double> col);
void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> image);
void maxpool2d_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                       std::span<std::uint32_t> argmax);
void maxpool2d_backward(const PoolGeometry& g, std::span<const double> grad_out,
                        std::span<const std::uint32_t> argmax, std::span<double> grad_in);

}  // namespace serial

/// Number of worker threads the parallel kernels will use.
int max_threads();

}  // namespace skycast::kernels
