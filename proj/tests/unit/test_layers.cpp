// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "skycast/errors.hpp"
#include "skycast/grad_check.hpp"
#include "skycast/layers.hpp"
#include "test_util.hpp"

using namespace skycast;
using skycast::testing::random_tensor;
using skycast::testing::to_vector;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(Conv2D, OneByOneKernelScales) {
  Conv2DLayer layer = Conv2DLayer::create(1, 1, 1, 1, ops::Padding::kSame, 0);
  layer.kernel.mutable_data()[0] = 2.0;
  const Tensor x = random_tensor({1, 5, 6}, 1);
  const Tensor y = conv2d(x, layer);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), 2.0 * x.at(i));
}

TEST(Conv2D, ReceptiveFieldArithmetic) {
  const Conv2DLayer layer = Conv2DLayer::create(3, 8, 7, 4, ops::Padding::kSame, 1);
  EXPECT_EQ(layer.receptive_field_h(), 25u);
  EXPECT_EQ(layer.receptive_field_w(), 25u);
  EXPECT_EQ(layer.parameter_count(), 8u * 3 * 49 + 8);
}

TEST(Conv2D, DilatedFootprintIsExactly25x25) {
  const Conv2DLayer layer = Conv2DLayer::create(1, 1, 7, 4, ops::Padding::kSame, 7);
  const std::size_t n = 41, site_r = 20, site_c = 17;
  const Tensor x = random_tensor({1, n, n}, 2);
  const Tensor base = conv2d(x, layer);
  std::size_t min_r = n, max_r = 0, min_c = n, max_c = 0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const Tensor xp = x.detach();
      xp.mutable_data()[r * n + c] += 1.0;
      const double changed = conv2d(xp, layer).at(site_r * n + site_c) - base.at(site_r * n + site_c);
      const long dr = static_cast<long>(r) - static_cast<long>(site_r);
      const long dc = static_cast<long>(c) - static_cast<long>(site_c);
      if (std::abs(dr) > 12 || std::abs(dc) > 12) {
        EXPECT_EQ(changed, 0.0) << "pixel " << r << "," << c;
      }
      if (changed != 0.0) {
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
        min_c = std::min(min_c, c);
        max_c = std::max(max_c, c);
      }
    }
  }
  EXPECT_EQ(max_r - min_r + 1, 25u);
  EXPECT_EQ(max_c - min_c + 1, 25u);
}

// Kernel with (l - 1) zeros inserted between taps along each spatial axis.
Tensor zero_inflate(const Tensor& k, std::size_t l) {
  const std::size_t co = k.dim(0), ci = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::size_t eh = (kh - 1) * l + 1, ew = (kw - 1) * l + 1;
  std::vector<double> out(co * ci * eh * ew, 0.0);
  for (std::size_t a = 0; a < co * ci; ++a) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) out[a * eh * ew + i * l * ew + j * l] = k.at(a * kh * kw + i * kw + j);
    }
  }
  return Tensor({co, ci, eh, ew}, std::move(out));
}

struct InflateCase {
  Shape input;
  std::size_t out_channels, kernel, dilation;
  ops::Padding padding;
};

void PrintTo(const InflateCase& c, std::ostream* os) {
  *os << shape_string(c.input) << "_k" << c.kernel << "_l" << c.dilation
      << (c.padding == ops::Padding::kSame ? "_same" : "_valid");
}

class ZeroInflation : public ::testing::TestWithParam<InflateCase> {};

TEST_P(ZeroInflation, DilatedEqualsInflatedExactly) {
  const auto& c = GetParam();
  const std::size_t in_ch = c.input.size() == 4 ? c.input[1] : c.input[0];
  const Conv2DLayer layer = Conv2DLayer::create(in_ch, c.out_channels, c.kernel, c.dilation, c.padding, 3);
  const Tensor x = random_tensor(c.input, 4);
  const Tensor y = conv2d(x, layer);
  ops::Conv2DOptions plain;
  plain.padding = c.padding;
  const Tensor y_ref = ops::conv2d(x, zero_inflate(layer.kernel, c.dilation), layer.bias, plain);
  ASSERT_EQ(y.shape(), y_ref.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) ASSERT_EQ(y.at(i), y_ref.at(i)) << "index " << i;
}

INSTANTIATE_TEST_SUITE_P(Shapes, ZeroInflation,
                         ::testing::Values(InflateCase{{1, 9, 9}, 1, 3, 2, ops::Padding::kSame},
                                           InflateCase{{1, 9, 9}, 1, 3, 2, ops::Padding::kValid},
                                           InflateCase{{3, 16, 12}, 4, 3, 3, ops::Padding::kSame},
                                           InflateCase{{2, 3, 20, 20}, 5, 7, 2, ops::Padding::kSame},
                                           InflateCase{{2, 30, 30}, 2, 7, 4, ops::Padding::kSame}));

TEST(Conv2D, ErrorsOnMismatch) {
  const Conv2DLayer layer = Conv2DLayer::create(3, 2, 3, 1, ops::Padding::kSame, 0);
  EXPECT_THROW(conv2d(random_tensor({2, 8, 8}, 1), layer), InvalidShape);
  const Conv2DLayer wide = Conv2DLayer::create(1, 1, 7, 4, ops::Padding::kValid, 0);
  EXPECT_THROW(conv2d(random_tensor({1, 20, 20}, 1), wide), InvalidShape);
  EXPECT_NO_THROW(conv2d(random_tensor({1, 25, 25}, 1), wide));
}

TEST(Conv2D, GradCheck) {
  const Conv2DLayer layer = Conv2DLayer::create(2, 3, 7, 4, ops::Padding::kSame, 5);
  layer.kernel.set_requires_grad(true);
  layer.bias.set_requires_grad(true);
  const auto r = grad_check(
      [&](const std::vector<Tensor>& in) {
        ops::Conv2DOptions o = layer.options;
        return ops::mean(ops::log_cosh(ops::conv2d(in[0], in[1], in[2], o)));
      },
      {random_tensor({2, 10, 9}, 6), layer.kernel, layer.bias}, 1e-5, 1e-4);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(MaxPool, Examples) {
  const Tensor c({1, 4, 6}, 3.25);
  const Tensor pc = maxpool2d(c);
  EXPECT_EQ(pc.shape(), (Shape{1, 2, 3}));
  for (double v : pc.data()) EXPECT_EQ(v, 3.25);
  EXPECT_EQ(to_vector(maxpool2d(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}))), (std::vector<double>{4}));
  EXPECT_EQ(maxpool2d(Tensor({3, 64, 64})).shape(), (Shape{3, 32, 32}));
  EXPECT_EQ(maxpool2d(Tensor({2, 3, 5, 7})).shape(), (Shape{2, 3, 2, 3}));
  EXPECT_THROW(maxpool2d(Tensor({1, 1, 4})), InvalidShape);
}

TEST(MaxPool, OutputEqualsWindowMaximum) {
  const Tensor x = random_tensor({3, 9, 8}, 9);
  const Tensor y = maxpool2d(x);
  const double global_max = *std::max_element(x.data().begin(), x.data().end());
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        double m = -1e300;
        for (std::size_t dr = 0; dr < 2; ++dr) {
          for (std::size_t dc = 0; dc < 2; ++dc) m = std::max(m, x.at(ch * 72 + (2 * r + dr) * 8 + 2 * c + dc));
        }
        const double v = y.at(ch * 16 + r * 4 + c);
        EXPECT_EQ(v, m);
        EXPECT_LE(v, global_max);
      }
    }
  }
}

TEST(Dense, IdentityAndBias) {
  const Tensor x = random_tensor({4}, 10);
  const Tensor eye({4, 4}, std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  EXPECT_EQ(to_vector(dense(x, eye, Tensor({4}, 0.0))), to_vector(x));
  const Tensor b({3}, std::vector<double>{1.5, -2.0, 0.25});
  EXPECT_EQ(to_vector(dense(x, Tensor({3, 4}, 0.0), b)), to_vector(b));
  EXPECT_THROW(dense(x, Tensor({3, 5}, 0.0), b), InvalidShape);
  EXPECT_THROW(dense(x, Tensor({3, 4}, 0.0), Tensor({4})), InvalidShape);
}

TEST(Dense, ParameterCount) {
  EXPECT_EQ(DenseLayer::create(1024, 512, 1).parameter_count(), 524800u);
}

TEST(Dense, BatchedMatchesPerRow) {
  const DenseLayer layer = DenseLayer::create(5, 3, 2);
  const Tensor xb = random_tensor({4, 5}, 11);
  const Tensor yb = dense(xb, layer);
  for (std::size_t r = 0; r < 4; ++r) {
    const Tensor yr = dense(ops::slice(ops::reshape(xb, {20}), 0, r * 5, r * 5 + 5), layer);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(yb.at(r * 3 + j), yr.at(j), 1e-14);
  }
}

TEST(Dense, GradCheck) {
  const DenseLayer layer = DenseLayer::create(6, 4, 3);
  layer.weight.set_requires_grad(true);
  layer.bias.set_requires_grad(true);
  const auto r = grad_check(
      [](const std::vector<Tensor>& in) { return ops::sum(ops::tanh(dense(in[0], in[1], in[2]))); },
      {random_tensor({3, 6}, 12), layer.weight, layer.bias}, 1e-5, 1e-4);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Dropout, IdentityCases) {
  const Tensor x = random_tensor({50}, 13);
  Rng rng(1);
  EXPECT_TRUE(dropout(x, {0.0, DropoutLayer::Mode::kTraining}, rng).same_storage(x));
  EXPECT_TRUE(dropout(x, {0.0, DropoutLayer::Mode::kInference}, rng).same_storage(x));
  EXPECT_EQ(to_vector(dropout(x, {0.5, DropoutLayer::Mode::kInference}, rng)), to_vector(x));
  EXPECT_THROW(dropout(x, {1.0, DropoutLayer::Mode::kTraining}, rng), InvalidArgument);
  EXPECT_THROW(dropout(x, {-0.1, DropoutLayer::Mode::kInference}, rng), InvalidArgument);
}

TEST(Dropout, TrainingPreservesExpectation) {
  const Tensor x({100000}, 1.0);
  Rng rng(2024);
  const Tensor y = dropout(x, {0.5, DropoutLayer::Mode::kTraining}, rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    zeros += v == 0.0;
  }
  EXPECT_NEAR(ops::mean(y).item(), 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, 0.5, 0.01);
}

TEST(Lstm, ZeroWeightsZeroInputs) {
  LSTMLayer layer = LSTMLayer::create(3, 4, 1);
  for (auto* t : {&layer.weight_ih, &layer.weight_hh, &layer.bias}) {
    std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  }
  const auto out = lstm_sequence({Tensor({3}), Tensor({3}), Tensor({3})}, layer);
  EXPECT_EQ(out.hidden_states.size(), 3u);
  EXPECT_EQ(to_vector(out.final_hidden), std::vector<double>(4, 0.0));
}

TEST(Lstm, HiddenStrictlyInsideUnitInterval) {
  LSTMLayer layer = LSTMLayer::create(5, 6, 2);
  for (auto* t : {&layer.weight_ih, &layer.weight_hh, &layer.bias}) {
    for (double& v : t->mutable_data()) v *= 25.0;
  }
  std::vector<Tensor> seq;
  for (int s = 0; s < 12; ++s) seq.push_back(random_tensor({5}, 40 + s, -20.0, 20.0));
  const auto out = lstm_sequence(seq, layer);
  for (const auto& h : out.hidden_states) {
    for (double v : h.data()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Lstm, SingleStepMatchesManualCell) {
  const std::size_t d = 3, h = 2;
  LSTMLayer layer = LSTMLayer::create(d, h, 3);
  for (std::size_t i = 0; i < 4 * h; ++i) layer.bias.mutable_data()[i] = 0.1 * static_cast<double>(i) - 0.3;
  const Tensor x = random_tensor({d}, 14);
  const auto out = lstm_sequence({x}, layer);
  auto pre = [&](std::size_t row) {
    double s = layer.bias.at(row);
    for (std::size_t j = 0; j < d; ++j) s += layer.weight_ih.at(row * d + j) * x.at(j);
    return s;  // h_0 = 0 so W_hh does not contribute
  };
  for (std::size_t u = 0; u < h; ++u) {
    const double i_g = sigmoid(pre(u));
    const double g_g = std::tanh(pre(2 * h + u));
    const double o_g = sigmoid(pre(3 * h + u));
    const double c = i_g * g_g;
    EXPECT_NEAR(out.final_cell.at(u), c, 1e-14);
    EXPECT_NEAR(out.final_hidden.at(u), o_g * std::tanh(c), 1e-14);
  }
}

TEST(Lstm, BatchedMatchesSingle) {
  const LSTMLayer layer = LSTMLayer::create(3, 4, 4);
  std::vector<Tensor> batched, first;
  for (int s = 0; s < 5; ++s) {
    const Tensor xb = random_tensor({2, 3}, 60 + s);
    batched.push_back(xb);
    first.push_back(ops::slice(ops::reshape(xb, {6}), 0, 0, 3));
  }
  const auto ob = lstm_sequence(batched, layer);
  const auto os = lstm_sequence(first, layer);
  for (std::size_t u = 0; u < 4; ++u) EXPECT_NEAR(ob.final_hidden.at(u), os.final_hidden.at(u), 1e-14);
}

TEST(Lstm, Errors) {
  const LSTMLayer layer = LSTMLayer::create(3, 2, 5);
  EXPECT_THROW(lstm_sequence({}, layer), InvalidArgument);
  EXPECT_THROW(lstm_sequence({Tensor({3}), Tensor({4})}, layer), InvalidShape);
  EXPECT_EQ(layer.parameter_count(), 4u * (3 + 2 + 1) * 2);
}

TEST(Lstm, GradCheck) {
  const LSTMLayer layer = LSTMLayer::create(3, 4, 6);
  for (auto* t : {&layer.weight_ih, &layer.weight_hh, &layer.bias}) t->set_requires_grad(true);
  const auto r = grad_check(
      [](const std::vector<Tensor>& in) {
        LSTMLayer l{in[3], in[4], in[5]};
        const auto out = lstm_sequence({in[0], in[1], in[2]}, l);
        return ops::sum(ops::mul(out.final_hidden, out.final_hidden));
      },
      {random_tensor({3}, 70), random_tensor({3}, 71), random_tensor({3}, 72), layer.weight_ih, layer.weight_hh,
       layer.bias},
      1e-5, 1e-4);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

}  // namespace
