// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor primitives. Each op validates shapes, computes its
// forward result and, when a tape is active and an input requires grad,
// records its backward rule on the tape.
#pragma once

#include <vector>

#include "skycast/kernels.hpp"
#include "skycast/tensor.hpp"

namespace skycast::ops {

// Elementwise / broadcasting arithmetic. `add` also accepts b whose shape
// equals the trailing dims of a (bias broadcast over leading dims).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Half-open range [begin, end) along axis.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

// Full reductions to a one-element tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
// Throws DomainError on any non-positive element.
Tensor log(const Tensor& a);
Tensor cosh(const Tensor& a);
// log(cosh(x)) with the asymptote |x| - log 2 used beyond |x| > 30.
Tensor log_cosh(const Tensor& a);

enum class Padding { kSame, kValid };

struct Conv2DOptions {
  std::size_t dilation_h = 1;
  std::size_t dilation_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::kSame;
};

/// Resolves padding and output size for an image of shape [C,H,W] and a
/// kernel [C',C,kh,kw]. Throws InvalidShape on any mismatch.
kernels::ConvGeometry conv_geometry(const Shape& image_chw, const Shape& kernel,
                                    const Conv2DOptions& opt);

/// Dilated 2-D convolution (cross-correlation form) of a [C,H,W] or
/// [N,C,H,W] input with kernel [C',C,kh,kw] and optional bias [C'].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              const Conv2DOptions& opt);

/// Max pooling over [C,H,W] or [N,C,H,W]; trailing rows/cols that do not
/// fill a window are dropped.
Tensor maxpool2d(const Tensor& input, std::size_t window = 2, std::size_t stride = 2);

}  // namespace skycast::ops
