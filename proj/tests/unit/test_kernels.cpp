// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "skycast/kernels.hpp"
#include "skycast/rng.hpp"

using namespace skycast;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_NEAR(a[i], b[i], tol * (1.0 + std::abs(b[i]))) << "index " << i;
  }
}

struct GemmCase {
  std::size_t m, n, k;
};

void PrintTo(const GemmCase& c, std::ostream* os) { *os << c.m << "x" << c.n << "x" << c.k; }

class GemmVsReference : public ::testing::TestWithParam<GemmCase> {};

TEST_P(GemmVsReference, AllLayoutsMatchSerial) {
  const auto [m, n, k] = GetParam();
  Rng rng(m * 131 + n * 17 + k);
  for (const bool accumulate : {false, true}) {
    const auto a = random_vec(m * k, rng);
    const auto b_nn = random_vec(k * n, rng);
    const auto b_nt = random_vec(n * k, rng);
    const auto init = random_vec(m * n, rng);

    auto c_fast = init, c_ref = init;
    kernels::gemm_nn(m, n, k, a, b_nn, c_fast, accumulate);
    kernels::serial::gemm_nn(m, n, k, a, b_nn, c_ref, accumulate);
    expect_close(c_fast, c_ref, 1e-12);

    c_fast = init;
    c_ref = init;
    kernels::gemm_nt(m, n, k, a, b_nt, c_fast, accumulate);
    kernels::serial::gemm_nt(m, n, k, a, b_nt, c_ref, accumulate);
    expect_close(c_fast, c_ref, 1e-12);

    // a reinterpreted as [k, m] for the transposed-A layout.
    c_fast = init;
    c_ref = init;
    kernels::gemm_tn(m, n, k, a, b_nn, c_fast, accumulate);
    kernels::serial::gemm_tn(m, n, k, a, b_nn, c_ref, accumulate);
    expect_close(c_fast, c_ref, 1e-12);
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, GemmVsReference,
                         ::testing::Values(GemmCase{1, 1, 1}, GemmCase{3, 5, 7}, GemmCase{4, 16, 9},
                                           GemmCase{17, 33, 65}, GemmCase{64, 100, 147},
                                           GemmCase{8, 512, 640}, GemmCase{5, 3, 1}));

TEST(Kernels, NnAccumulatesInAscendingKOrder) {
  // Zero rows appended to A's k dimension (with arbitrary B rows) must not
  // change a single bit of the result.
  Rng rng(7);
  const std::size_t m = 8, n = 40, k = 13;
  const auto a = random_vec(m * k, rng);
  const auto b = random_vec(k * n, rng);
  std::vector<double> a_pad(m * (2 * k), 0.0), b_pad(2 * k * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) a_pad[i * 2 * k + 2 * p] = a[i * k + p];
  }
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      b_pad[(2 * p) * n + j] = b[p * n + j];
      b_pad[(2 * p + 1) * n + j] = rng.uniform(-5.0, 5.0);
    }
  }
  std::vector<double> c(m * n), c_pad(m * n);
  kernels::gemm_nn(m, n, k, a, b, c, false);
  kernels::gemm_nn(m, n, 2 * k, a_pad, b_pad, c_pad, false);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i], c_pad[i]);
}

TEST(Kernels, Im2colAndCol2imMatchSerial) {
  Rng rng(11);
  for (const std::size_t dilation : {1u, 2u, 4u}) {
    for (const std::size_t stride : {1u, 2u}) {
      kernels::ConvGeometry g;
      g.channels = 3;
      g.height = 13;
      g.width = 11;
      g.kernel_h = 3;
      g.kernel_w = 3;
      g.dilation_h = g.dilation_w = dilation;
      g.stride_h = g.stride_w = stride;
      g.pad_top = g.pad_left = dilation;
      g.out_h = (g.height + 2 * dilation - (2 * dilation + 1)) / stride + 1;
      g.out_w = (g.width + 2 * dilation - (2 * dilation + 1)) / stride + 1;
      const auto image = random_vec(g.channels * g.height * g.width, rng);
      std::vector<double> col_fast(g.patch_size() * g.out_pixels());
      auto col_ref = col_fast;
      kernels::im2col(g, image, col_fast);
      kernels::serial::im2col(g, image, col_ref);
      EXPECT_EQ(col_fast, col_ref);

      const auto cols = random_vec(col_fast.size(), rng);
      std::vector<double> img_fast(image.size(), 0.5), img_ref(image.size(), 0.5);
      kernels::col2im(g, cols, img_fast);
      kernels::serial::col2im(g, cols, img_ref);
      expect_close(img_fast, img_ref, 1e-13);
    }
  }
}

TEST(Kernels, MaxpoolMatchesSerialAndDropsOddTail) {
  Rng rng(5);
  kernels::PoolGeometry g{4, 9, 7, 2, 2};
  EXPECT_EQ(g.out_h(), 4u);
  EXPECT_EQ(g.out_w(), 3u);
  const auto in = random_vec(g.channels * g.height * g.width, rng);
  const std::size_t n = g.channels * g.out_h() * g.out_w();
  std::vector<double> out_fast(n), out_ref(n);
  std::vector<std::uint32_t> arg_fast(n), arg_ref(n);
  kernels::maxpool2d_forward(g, in, out_fast, arg_fast);
  kernels::serial::maxpool2d_forward(g, in, out_ref, arg_ref);
  EXPECT_EQ(out_fast, out_ref);
  EXPECT_EQ(arg_fast, arg_ref);

  const auto grad_out = random_vec(n, rng);
  std::vector<double> gin_fast(in.size(), 0.0), gin_ref(in.size(), 0.0);
  kernels::maxpool2d_backward(g, grad_out, arg_fast, gin_fast);
  kernels::serial::maxpool2d_backward(g, grad_out, arg_ref, gin_ref);
  EXPECT_EQ(gin_fast, gin_ref);
}

}  // namespace
