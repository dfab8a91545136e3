// SPDX-License-Identifier: Apache-2.0
#include "skycast/ops.hpp"

#include <omp.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "skycast/errors.hpp"
#include "skycast/tape.hpp"

namespace skycast::ops {
namespace {

constexpr std::size_t kParallelElems = 1u << 16;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<double> data, bool track) {
  Tensor out(std::move(shape), std::move(data));
  if (track) out.set_requires_grad(true);
  return out;
}

void accumulate(const Tensor& target, std::span<const double> g) {
  auto dst = target.mutable_grad();
  const std::size_t n = dst.size();
#pragma omp parallel for schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidShape(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw InvalidShape(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                       shape_string(a.shape()));
  }
}

// y = f(x) elementwise; dy/dx computed from (x, y).
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  const auto xs = x.data();
  const std::size_t n = xs.size();
  std::vector<double> out(n);
#pragma omp parallel for schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xs[i]);
  const bool track = tracking({&x});
  Tensor y = make_result(x.shape(), std::move(out), track);
  if (track) {
    Tape::active()->record(op, {x}, y, [x, y, df]() mutable {
      const auto g = y.grad();
      const auto xv = x.data();
      const auto yv = y.data();
      auto gx = x.mutable_grad();
      const std::size_t len = gx.size();
#pragma omp parallel for schedule(static) if (len >= kParallelElems)
      for (std::size_t i = 0; i < len; ++i) gx[i] += g[i] * df(xv[i], yv[i]);
    });
  }
  return y;
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool same = sa == sb;
  const bool broadcast = !same && sb.size() < sa.size() &&
                         std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()));
  if (!same && !broadcast) {
    throw InvalidShape("add: shape mismatch " + shape_string(sa) + " vs " + shape_string(sb));
  }
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t n = av.size();
  const std::size_t period = bv.size();
  std::vector<double> out(n);
#pragma omp parallel for schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i % period];
  const bool track = tracking({&a, &b});
  Tensor y = make_result(sa, std::move(out), track);
  if (track) {
    Tape::active()->record("add", {a, b}, y, [a, b, y, period]() mutable {
      const auto g = y.grad();
      if (a.requires_grad()) accumulate(a, g);
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % period] += g[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const bool track = tracking({&a, &b});
  Tensor y = make_result(a.shape(), std::move(out), track);
  if (track) {
    Tape::active()->record("sub", {a, b}, y, [a, b, y]() mutable {
      const auto g = y.grad();
      if (a.requires_grad()) accumulate(a, g);
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t n = av.size();
  std::vector<double> out(n);
#pragma omp parallel for schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
  const bool track = tracking({&a, &b});
  Tensor y = make_result(a.shape(), std::move(out), track);
  if (track) {
    Tape::active()->record("mul", {a, b}, y, [a, b, y]() mutable {
      const auto g = y.grad();
      const auto av2 = a.data();
      const auto bv2 = b.data();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw InvalidShape("matmul: inner dims differ " + shape_string(a.shape()) + " x " +
                       shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm_nn(m, n, k, a.data(), b.data(), out, false);
  const bool track = tracking({&a, &b});
  Tensor y = make_result({m, n}, std::move(out), track);
  if (track) {
    Tape::active()->record("matmul", {a, b}, y, [a, b, y, m, k, n]() mutable {
      const auto g = y.grad();
      if (a.requires_grad()) kernels::gemm_nt(m, k, n, g, b.data(), a.mutable_grad(), true);
      if (b.requires_grad()) kernels::gemm_tn(k, n, m, a.data(), g, b.mutable_grad(), true);
    });
  }
  return y;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw InvalidShape("matmul_nt: inner dims differ " + shape_string(a.shape()) + " x " +
                       shape_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n);
  kernels::gemm_nt(m, n, k, a.data(), b.data(), out, false);
  const bool track = tracking({&a, &b});
  Tensor y = make_result({m, n}, std::move(out), track);
  if (track) {
    Tape::active()->record("matmul_nt", {a, b}, y, [a, b, y, m, k, n]() mutable {
      const auto g = y.grad();
      if (a.requires_grad()) kernels::gemm_nn(m, k, n, g, b.data(), a.mutable_grad(), true);
      if (b.requires_grad()) kernels::gemm_tn(n, k, m, g, a.data(), b.mutable_grad(), true);
    });
  }
  return y;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  validate_shape(shape);
  if (shape_numel(shape) != a.numel()) {
    throw InvalidShape("reshape: cannot view " + shape_string(a.shape()) + " as " +
                       shape_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const bool track = tracking({&a});
  Tensor y = make_result(shape, std::move(out), track);
  if (track) {
    Tape::active()->record("reshape", {a}, y, [a, y]() mutable { accumulate(a, y.grad()); });
  }
  return y;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw InvalidArgument("concat: no operands");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw InvalidShape("concat: axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw InvalidShape("concat: " + shape_string(s) + " incompatible with " +
                         shape_string(first) + " on axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = prod(first, 0, axis);
  const std::size_t inner = prod(first, axis + 1, first.size());
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(outer * out_row);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    offset += chunk;
  }
  bool track = false;
  for (const auto& p : parts) track = track || tracking({&p});
  Tensor y = make_result(out_shape, std::move(out), track);
  if (track) {
    Tape::active()->record("concat", parts, y, [parts, y, offsets, outer, out_row, inner, axis]() mutable {
      const auto g = y.grad();
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].requires_grad()) continue;
        const std::size_t chunk = parts[i].dim(axis) * inner;
        auto gp = parts[i].mutable_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < chunk; ++j) gp[o * chunk + j] += g[o * out_row + offsets[i] + j];
        }
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw InvalidShape("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                       ") invalid on axis " + std::to_string(axis) + " of " + shape_string(s));
  }
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t outer = prod(s, 0, axis);
  const std::size_t inner = prod(s, axis + 1, s.size());
  const std::size_t in_row = s[axis] * inner;
  const std::size_t chunk = (end - begin) * inner;
  const std::size_t start = begin * inner;
  std::vector<double> out(outer * chunk);
  const auto src = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * in_row + start), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  const bool track = tracking({&a});
  Tensor y = make_result(out_shape, std::move(out), track);
  if (track) {
    Tape::active()->record("slice", {a}, y, [a, y, outer, in_row, chunk, start]() mutable {
      const auto g = y.grad();
      auto ga = a.mutable_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < chunk; ++j) ga[o * in_row + start + j] += g[o * chunk + j];
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (const double v : a.data()) total += v;
  const bool track = tracking({&a});
  Tensor y = make_result({1}, {total}, track);
  if (track) {
    Tape::active()->record("sum", {a}, y, [a, y]() mutable {
      const double g = y.grad()[0];
      for (double& v : a.mutable_grad()) v += g;
    });
  }
  return y;
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (const double v : a.data()) total += v;
  const bool track = tracking({&a});
  Tensor y = make_result({1}, {total / n}, track);
  if (track) {
    Tape::active()->record("mean", {a}, y, [a, y, n]() mutable {
      const double g = y.grad()[0] / n;
      for (double& v : a.mutable_grad()) v += g;
    });
  }
  return y;
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (const double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor cosh(const Tensor& a) {
  return unary("cosh", a, [](double x) { return std::cosh(x); },
               [](double x, double) { return std::sinh(x); });
}

Tensor log_cosh(const Tensor& a) {
  return unary(
      "log_cosh", a,
      [](double x) {
        const double ax = std::abs(x);
        return ax > 30.0 ? ax - std::numbers::ln2 : std::log(std::cosh(x));
      },
      [](double x, double) { return std::tanh(x); });
}

kernels::ConvGeometry conv_geometry(const Shape& image_chw, const Shape& kernel,
                                    const Conv2DOptions& opt) {
  if (image_chw.size() != 3) throw InvalidShape("conv2d: image must be [C,H,W], got " + shape_string(image_chw));
  if (kernel.size() != 4) throw InvalidShape("conv2d: kernel must be [C',C,kh,kw], got " + shape_string(kernel));
  if (kernel[1] != image_chw[0]) {
    throw InvalidShape("conv2d: kernel expects " + std::to_string(kernel[1]) +
                       " input channels, image has " + std::to_string(image_chw[0]));
  }
  if (opt.dilation_h == 0 || opt.dilation_w == 0 || opt.stride_h == 0 || opt.stride_w == 0) {
    throw InvalidShape("conv2d: dilation and stride must be >= 1");
  }
  kernels::ConvGeometry g;
  g.channels = image_chw[0];
  g.height = image_chw[1];
  g.width = image_chw[2];
  g.kernel_h = kernel[2];
  g.kernel_w = kernel[3];
  g.dilation_h = opt.dilation_h;
  g.dilation_w = opt.dilation_w;
  g.stride_h = opt.stride_h;
  g.stride_w = opt.stride_w;
  const std::size_t ext_h = (g.kernel_h - 1) * g.dilation_h + 1;
  const std::size_t ext_w = (g.kernel_w - 1) * g.dilation_w + 1;
  if (opt.padding == Padding::kSame) {
    if (opt.stride_h != 1 || opt.stride_w != 1) {
      throw InvalidShape("conv2d: same padding requires stride (1,1)");
    }
    g.pad_top = (ext_h - 1) / 2;
    g.pad_left = (ext_w - 1) / 2;
    g.out_h = g.height;
    g.out_w = g.width;
  } else {
    if (ext_h > g.height || ext_w > g.width) {
      throw InvalidShape("conv2d: dilated kernel extent " + std::to_string(ext_h) + "x" +
                         std::to_string(ext_w) + " exceeds input " + std::to_string(g.height) +
                         "x" + std::to_string(g.width));
    }
    g.out_h = (g.height - ext_h) / g.stride_h + 1;
    g.out_w = (g.width - ext_w) / g.stride_w + 1;
  }
  return g;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              const Conv2DOptions& opt) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw InvalidShape("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_string(input.shape()));
  }
  const bool batched = input.rank() == 4;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const Shape chw = batched ? Shape{input.dim(1), input.dim(2), input.dim(3)} : input.shape();
  const kernels::ConvGeometry g = conv_geometry(chw, kernel.shape(), opt);
  const std::size_t cout = kernel.dim(0);
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw InvalidShape("conv2d: bias must be [" + std::to_string(cout) + "], got " + shape_string(bias.shape()));
  }
  const std::size_t patch = g.patch_size();
  const std::size_t npix = g.out_pixels();
  const std::size_t in_size = g.channels * g.height * g.width;
  const std::size_t out_size = cout * npix;

  std::vector<double> out(batch * out_size);
  const auto x = input.data();
  const auto w = kernel.data();
  const double* b = bias.defined() ? bias.data().data() : nullptr;
#pragma omp parallel if (batch > 1 && omp_get_max_threads() > 1)
  {
    std::vector<double> col(patch * npix);
#pragma omp for schedule(static)
    for (std::size_t n = 0; n < batch; ++n) {
      kernels::im2col(g, x.subspan(n * in_size, in_size), col);
      std::span<double> y(out.data() + n * out_size, out_size);
      kernels::gemm_nn(cout, npix, patch, w, col, y, false);
      if (b != nullptr) {
        for (std::size_t co = 0; co < cout; ++co) {
          for (std::size_t p = 0; p < npix; ++p) y[co * npix + p] += b[co];
        }
      }
    }
  }

  Shape out_shape = batched ? Shape{batch, cout, g.out_h, g.out_w} : Shape{cout, g.out_h, g.out_w};
  const bool track = tracking({&input, &kernel, &bias});
  Tensor y = make_result(out_shape, std::move(out), track);
  if (track) {
    std::vector<Tensor> inputs{input, kernel};
    if (bias.defined()) inputs.push_back(bias);
    Tape::active()->record("conv2d", inputs, y, [input, kernel, bias, y, g, batch, cout]() mutable {
      const std::size_t patch_sz = g.patch_size();
      const std::size_t pixels = g.out_pixels();
      const std::size_t in_sz = g.channels * g.height * g.width;
      const std::size_t out_sz = cout * pixels;
      const auto gy = y.grad();
      const auto xv = input.data();
      const auto wv = kernel.data();
      const bool want_x = input.requires_grad();
      const bool want_w = kernel.requires_grad();
      const bool want_b = bias.defined() && bias.requires_grad();
      std::span<double> gx = want_x ? input.mutable_grad() : std::span<double>{};
      std::span<double> gw = want_w ? kernel.mutable_grad() : std::span<double>{};
      std::span<double> gb = want_b ? bias.mutable_grad() : std::span<double>{};
#pragma omp parallel if (batch > 1 && omp_get_max_threads() > 1)
      {
        std::vector<double> col(patch_sz * pixels);
        std::vector<double> dcol(want_x ? patch_sz * pixels : 0);
        std::vector<double> dw(want_w ? wv.size() : 0, 0.0);
        std::vector<double> db(want_b ? cout : 0, 0.0);
#pragma omp for schedule(static)
        for (std::size_t n = 0; n < batch; ++n) {
          const auto gyn = gy.subspan(n * out_sz, out_sz);
          if (want_w) {
            kernels::im2col(g, xv.subspan(n * in_sz, in_sz), col);
            kernels::gemm_nt(cout, patch_sz, pixels, gyn, col, dw, true);
          }
          if (want_b) {
            for (std::size_t co = 0; co < cout; ++co) {
              for (std::size_t p = 0; p < pixels; ++p) db[co] += gyn[co * pixels + p];
            }
          }
          if (want_x) {
            kernels::gemm_tn(patch_sz, pixels, cout, wv, gyn, dcol, false);
            kernels::col2im(g, dcol, gx.subspan(n * in_sz, in_sz));
          }
        }
#pragma omp critical
        {
          for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
          for (std::size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
        }
      }
    });
  }
  return y;
}

Tensor maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw InvalidShape("maxpool2d: input must be [C,H,W] or [N,C,H,W], got " + shape_string(input.shape()));
  }
  if (window == 0 || stride == 0) throw InvalidShape("maxpool2d: window and stride must be >= 1");
  const bool batched = input.rank() == 4;
  const std::size_t batch = batched ? input.dim(0) : 1;
  kernels::PoolGeometry g;
  g.channels = batch * input.dim(batched ? 1 : 0);
  g.height = input.dim(batched ? 2 : 1);
  g.width = input.dim(batched ? 3 : 2);
  g.window = window;
  g.stride = stride;
  if (g.height < window || g.width < window) {
    throw InvalidShape("maxpool2d: spatial dims of " + shape_string(input.shape()) +
                       " smaller than the window");
  }
  const std::size_t n_out = g.channels * g.out_h() * g.out_w();
  std::vector<double> out(n_out);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(n_out);
  kernels::maxpool2d_forward(g, input.data(), out, *argmax);
  Shape out_shape = input.shape();
  out_shape[out_shape.size() - 2] = g.out_h();
  out_shape[out_shape.size() - 1] = g.out_w();
  const bool track = tracking({&input});
  Tensor y = make_result(out_shape, std::move(out), track);
  if (track) {
    Tape::active()->record("maxpool2d", {input}, y, [input, y, g, argmax]() mutable {
      kernels::maxpool2d_backward(g, y.grad(), *argmax, input.mutable_grad());
    });
  }
  return y;
}

}  // namespace skycast::ops
