// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "skycast/errors.hpp"
#include "skycast/grad_check.hpp"
#include "skycast/ops.hpp"
#include "skycast/tape.hpp"
#include "test_util.hpp"

using namespace skycast;
using skycast::testing::random_tensor;
using skycast::testing::to_vector;

namespace {

TEST(TensorCreate, ZerosAndConstant) {
  const Tensor z = Tensor::create({2, 2}, Init::zeros());
  EXPECT_EQ(z.shape(), (Shape{2, 2}));
  EXPECT_EQ(to_vector(z), std::vector<double>(4, 0.0));
  const Tensor c = Tensor::create({3}, Init::constant(1.5));
  EXPECT_EQ(to_vector(c), (std::vector<double>{1.5, 1.5, 1.5}));
  EXPECT_EQ(to_vector(Tensor::create({2}, Init::ones())), (std::vector<double>{1.0, 1.0}));
}

TEST(TensorCreate, FanScaledUniformIsDeterministicAndBounded) {
  const Tensor a = Tensor::create({4, 4}, Init::fan_scaled_uniform(), 42);
  const Tensor b = Tensor::create({4, 4}, Init::fan_scaled_uniform(), 42);
  EXPECT_EQ(to_vector(a), to_vector(b));
  const Tensor c = Tensor::create({4, 4}, Init::fan_scaled_uniform(), 43);
  EXPECT_NE(to_vector(a), to_vector(c));
  const double bound = std::sqrt(6.0 / 8.0);
  for (double v : a.data()) EXPECT_LE(std::abs(v), bound);

  // Conv kernels use channel * receptive-field fans.
  const Tensor k = Tensor::create({8, 3, 3, 3}, Init::fan_scaled_uniform(), 1);
  const double kb = std::sqrt(6.0 / (27.0 + 72.0));
  for (double v : k.data()) EXPECT_LE(std::abs(v), kb);
}

TEST(TensorCreate, RejectsBadShapes) {
  EXPECT_THROW(Tensor::create({2, 0}, Init::zeros()), InvalidShape);
  EXPECT_THROW(Tensor::create({}, Init::zeros()), InvalidShape);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), InvalidShape);
}

TEST(Ops, MatmulIdentity) {
  const Tensor eye({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor a = random_tensor({3, 3}, 3);
  EXPECT_EQ(to_vector(ops::matmul(eye, a)), to_vector(a));
  EXPECT_EQ(to_vector(ops::matmul_nt(a, eye)), to_vector(a));
}

TEST(Ops, MatmulValues) {
  const Tensor a({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Tensor b({3, 2}, std::vector<double>{7, 8, 9, 10, 11, 12});
  EXPECT_EQ(to_vector(ops::matmul(a, b)), (std::vector<double>{58, 64, 139, 154}));
  EXPECT_THROW(ops::matmul(a, a), InvalidShape);
}

TEST(Ops, ReductionsAndConcat) {
  EXPECT_DOUBLE_EQ(ops::mean(Tensor({3}, std::vector<double>{2, 4, 6})).item(), 4.0);
  EXPECT_DOUBLE_EQ(ops::sum(Tensor({3}, std::vector<double>{2, 4, 6})).item(), 12.0);
  const Tensor c = ops::concat({Tensor({2}, std::vector<double>{1, 2}), Tensor({1}, std::vector<double>{3})}, 0);
  EXPECT_EQ(to_vector(c), (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(ops::concat({Tensor({2, 2}), Tensor({3, 3})}, 0), InvalidShape);
}

TEST(Ops, ElementwiseValues) {
  const Tensor x({4}, std::vector<double>{-1.0, 0.0, 0.5, 2.0});
  EXPECT_EQ(to_vector(ops::relu(x)), (std::vector<double>{0.0, 0.0, 0.5, 2.0}));
  EXPECT_DOUBLE_EQ(ops::sigmoid(x).at(1), 0.5);
  EXPECT_DOUBLE_EQ(ops::tanh(x).at(3), std::tanh(2.0));
  EXPECT_DOUBLE_EQ(ops::exp(x).at(0), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(ops::cosh(x).at(2), std::cosh(0.5));
  EXPECT_EQ(to_vector(ops::scale(x, 2.0)), (std::vector<double>{-2.0, 0.0, 1.0, 4.0}));
  EXPECT_EQ(to_vector(ops::sub(x, x)), std::vector<double>(4, 0.0));
  EXPECT_THROW(ops::add(x, Tensor({3})), InvalidShape);
}

TEST(Ops, LogRejectsNonPositive) {
  EXPECT_THROW(ops::log(Tensor({2}, std::vector<double>{1.0, 0.0})), DomainError);
  EXPECT_THROW(ops::log(Tensor({1}, std::vector<double>{-3.0})), DomainError);
  EXPECT_DOUBLE_EQ(ops::log(Tensor({1}, std::vector<double>{std::exp(2.0)})).item(), 2.0);
}

TEST(Ops, NoNanOnExtremeFiniteInputs) {
  const Tensor x({6}, std::vector<double>{-800.0, -40.0, -1e-300, 0.0, 40.0, 800.0});
  for (const Tensor& y : {ops::sigmoid(x), ops::tanh(x), ops::relu(x), ops::log_cosh(x), ops::exp(ops::scale(x, 0.1))}) {
    for (double v : y.data()) EXPECT_FALSE(std::isnan(v));
  }
}

TEST(Ops, InferenceModeRecordsNothing) {
  const Tensor x = random_tensor({3}, 1);
  const Tensor y = ops::tanh(x);
  EXPECT_FALSE(y.requires_grad());
  Tape tape;
  {
    TapeScope scope(tape);
    EXPECT_TRUE(ops::tanh(x).requires_grad());
    EXPECT_FALSE(ops::tanh(Tensor({3}, 1.0)).requires_grad());
  }
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Backward, LinearAndQuadratic) {
  Tape tape;
  const Tensor x = Tensor({3}, std::vector<double>{1, 2, 3});
  x.set_requires_grad(true);
  {
    TapeScope scope(tape);
    tape.backward(ops::sum(x));
  }
  EXPECT_EQ(to_vector(Tensor({3}, std::vector<double>(x.grad().begin(), x.grad().end()))),
            (std::vector<double>{1, 1, 1}));

  Tape tape2;
  Tensor loss;
  {
    TapeScope scope(tape2);
    loss = ops::sum(ops::mul(x, x));
  }
  const auto grads = backward(tape2, loss, {{"x", x, true}});
  EXPECT_EQ(grads.at("x"), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  const Tensor x = random_tensor({3}, 2);
  Tensor y;
  {
    TapeScope scope(tape);
    y = ops::tanh(x);
  }
  EXPECT_THROW(tape.backward(y), InvalidArgument);
}

TEST(Backward, ReusedParameterAccumulatesAndUnusedIsZero) {
  const Tensor w = random_tensor({2, 2}, 5);
  const Tensor unused = random_tensor({4}, 6);
  const Tensor x = random_tensor({3, 2}, 7);
  x.set_requires_grad(false);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    const Tensor h = ops::matmul(x, w);
    loss = ops::sum(ops::matmul(h, w));
  }
  const auto grads = backward(tape, loss, {{"w", w, true}, {"unused", unused, true}});
  EXPECT_EQ(grads.at("unused"), std::vector<double>(4, 0.0));

  // d/dw sum(x w w) = x^T 1 w^T + (x w)^T 1, written out directly.
  const auto xv = x.data();
  const auto wv = w.data();
  std::vector<double> expected(4, 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        // w in the first product
        expected[i * 2 + j] += xv[r * 2 + i] * (wv[j * 2 + 0] + wv[j * 2 + 1]);
        // w in the second product
        expected[i * 2 + j] += xv[r * 2 + 0] * wv[0 * 2 + i] + xv[r * 2 + 1] * wv[1 * 2 + i];
      }
    }
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(grads.at("w")[i], expected[i], 1e-12);
}

TEST(Backward, TapeIsTopologicalAndVisitedOnce) {
  const Tensor a = random_tensor({2, 3}, 8);
  const Tensor b = random_tensor({3}, 9);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    const Tensor h = ops::sigmoid(ops::add(a, b));
    loss = ops::mean(ops::mul(h, ops::tanh(h)));
  }
  std::set<const void*> produced;
  for (std::size_t i = 0; i < tape.size(); ++i) {
    for (const Tensor& in : tape.entry(i).inputs) {
      if (in.same_storage(a) || in.same_storage(b)) continue;
      bool found = false;
      for (std::size_t j = 0; j < i; ++j) found = found || tape.entry(j).output.same_storage(in);
      EXPECT_TRUE(found) << "entry " << i << " consumes a tensor not produced earlier";
    }
  }
  tape.backward(loss);
  EXPECT_EQ(tape.rules_run(), tape.size());
}

TEST(Backward, SecondBackwardGivesSameGradients) {
  const Tensor x = random_tensor({5}, 10);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = ops::sum(ops::mul(x, ops::exp(x)));
  }
  const auto g1 = backward(tape, loss, {{"x", x, true}});
  const auto g2 = backward(tape, loss, {{"x", x, true}});
  EXPECT_EQ(g1, g2);
}

TEST(GradCheck, SumOfSquares) {
  const auto r = grad_check([](const std::vector<Tensor>& in) { return ops::sum(ops::mul(in[0], in[0])); },
                            {random_tensor({4, 3}, 11)}, 1e-5, 1e-6);
  EXPECT_LT(r.max_relative_error, 1e-6);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheck, ReportsDisagreementWithoutThrowing) {
  // Non-differentiable kink: relu at exactly zero disagrees with central differences.
  const Tensor x({1}, std::vector<double>{0.0});
  x.set_requires_grad(true);
  const auto r = grad_check([](const std::vector<Tensor>& in) { return ops::sum(ops::relu(in[0])); }, {x},
                            1e-5, 1e-4);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_relative_error, 1e-4);
  EXPECT_THROW(grad_check([](const std::vector<Tensor>& in) { return ops::sum(in[0]); }, {x}, 0.0, 1e-4),
               InvalidArgument);
}

// Every differentiable primitive against central differences on [-2, 2].
struct PrimitiveCase {
  const char* name;
  std::vector<Shape> shapes;
  ScalarFn fn;
};

void PrintTo(const PrimitiveCase& c, std::ostream* os) { *os << c.name; }

class PrimitiveGradients : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
  const auto& c = GetParam();
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < c.shapes.size(); ++i) inputs.push_back(random_tensor(c.shapes[i], 100 + i));
  const auto r = grad_check(c.fn, inputs, 1e-5, 1e-4);
  EXPECT_LT(r.max_relative_error, 1e-4) << c.name << " worst input " << r.worst_input << " index "
                                        << r.worst_index << " analytic " << r.worst_analytic << " numeric "
                                        << r.worst_numeric;
}

// Weighted sum so that every output coordinate gets a distinct upstream gradient.
Tensor weighted(const Tensor& y) {
  std::vector<double> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
  return ops::sum(ops::mul(y, Tensor(y.shape(), std::move(w))));
}

Tensor positive(const Tensor& x) { return ops::add(ops::mul(x, x), Tensor(x.shape(), 0.5)); }

INSTANTIATE_TEST_SUITE_P(
    All, PrimitiveGradients,
    ::testing::Values(
        PrimitiveCase{"add", {{3, 4}, {3, 4}}, [](const auto& in) { return weighted(ops::add(in[0], in[1])); }},
        PrimitiveCase{"add_broadcast", {{3, 4}, {4}}, [](const auto& in) { return weighted(ops::add(in[0], in[1])); }},
        PrimitiveCase{"sub", {{5}, {5}}, [](const auto& in) { return weighted(ops::sub(in[0], in[1])); }},
        PrimitiveCase{"mul", {{2, 3}, {2, 3}}, [](const auto& in) { return weighted(ops::mul(in[0], in[1])); }},
        PrimitiveCase{"scale", {{6}}, [](const auto& in) { return weighted(ops::scale(in[0], -1.7)); }},
        PrimitiveCase{"matmul", {{3, 5}, {5, 2}}, [](const auto& in) { return weighted(ops::matmul(in[0], in[1])); }},
        PrimitiveCase{"matmul_nt", {{3, 5}, {4, 5}}, [](const auto& in) { return weighted(ops::matmul_nt(in[0], in[1])); }},
        PrimitiveCase{"reshape", {{2, 6}}, [](const auto& in) { return weighted(ops::reshape(in[0], {3, 4})); }},
        PrimitiveCase{"concat0", {{2, 3}, {1, 3}}, [](const auto& in) { return weighted(ops::concat({in[0], in[1]}, 0)); }},
        PrimitiveCase{"concat1", {{2, 3}, {2, 2}}, [](const auto& in) { return weighted(ops::concat({in[0], in[1]}, 1)); }},
        PrimitiveCase{"slice", {{4, 5}}, [](const auto& in) { return weighted(ops::slice(in[0], 1, 1, 4)); }},
        PrimitiveCase{"sum", {{7}}, [](const auto& in) { return ops::mul(ops::sum(in[0]), ops::sum(ops::tanh(in[0]))); }},
        PrimitiveCase{"mean", {{7}}, [](const auto& in) { return ops::mul(ops::mean(in[0]), ops::mean(in[0])); }},
        PrimitiveCase{"tanh", {{8}}, [](const auto& in) { return weighted(ops::tanh(in[0])); }},
        PrimitiveCase{"sigmoid", {{8}}, [](const auto& in) { return weighted(ops::sigmoid(in[0])); }},
        PrimitiveCase{"relu", {{8}}, [](const auto& in) { return weighted(ops::relu(in[0])); }},
        PrimitiveCase{"exp", {{8}}, [](const auto& in) { return weighted(ops::exp(in[0])); }},
        PrimitiveCase{"log", {{8}}, [](const auto& in) { return weighted(ops::log(positive(in[0]))); }},
        PrimitiveCase{"cosh", {{8}}, [](const auto& in) { return weighted(ops::cosh(in[0])); }},
        PrimitiveCase{"log_cosh", {{8}}, [](const auto& in) { return weighted(ops::log_cosh(in[0])); }},
        PrimitiveCase{"maxpool", {{2, 4, 6}}, [](const auto& in) { return weighted(ops::maxpool2d(in[0], 2, 2)); }},
        PrimitiveCase{"conv_valid_stride2",
                      {{2, 7, 7}, {3, 2, 3, 3}, {3}},
                      [](const auto& in) {
                        ops::Conv2DOptions o;
                        o.padding = ops::Padding::kValid;
                        o.stride_h = o.stride_w = 2;
                        return weighted(ops::conv2d(in[0], in[1], in[2], o));
                      }},
        PrimitiveCase{"conv_batch_dilated",
                      {{2, 2, 6, 6}, {2, 2, 3, 3}, {2}},
                      [](const auto& in) {
                        ops::Conv2DOptions o;
                        o.dilation_h = o.dilation_w = 2;
                        return weighted(ops::conv2d(in[0], in[1], in[2], o));
                      }},
        PrimitiveCase{"composite",
                      {{3, 4}, {4, 2}},
                      [](const auto& in) {
                        const Tensor h = ops::tanh(ops::matmul(in[0], in[1]));
                        return ops::mean(ops::log_cosh(ops::sub(ops::sigmoid(h), ops::scale(h, 0.5))));
                      }}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

TEST(Properties, ReshapeRoundTrip) {
  const Tensor x = random_tensor({2, 3, 4}, 12);
  EXPECT_EQ(to_vector(ops::reshape(ops::reshape(x, {6, 4}), {2, 3, 4})), to_vector(x));
  EXPECT_EQ(ops::reshape(ops::reshape(x, {24}), {2, 3, 4}).shape(), x.shape());
  EXPECT_THROW(ops::reshape(x, {5, 5}), InvalidShape);
}

TEST(Properties, ConcatThenSliceRecoversOperands) {
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Shape sa{2, 3, 4}, sb{2, 3, 4};
    sb[axis] = 5;
    const Tensor a = random_tensor(sa, 13 + axis);
    const Tensor b = random_tensor(sb, 23 + axis);
    const Tensor c = ops::concat({a, b}, axis);
    EXPECT_EQ(to_vector(ops::slice(c, axis, 0, sa[axis])), to_vector(a));
    EXPECT_EQ(to_vector(ops::slice(c, axis, sa[axis], sa[axis] + sb[axis])), to_vector(b));
  }
}

TEST(Properties, BackwardOfSumOfLossesIsSumOfGradients) {
  const Tensor w = random_tensor({3, 3}, 30);
  const Tensor x = random_tensor({2, 3}, 31);
  const std::vector<Parameter> params{{"w", w, true}, {"x", x, true}};
  auto loss1 = [&] { return ops::sum(ops::tanh(ops::matmul(x, w))); };
  auto loss2 = [&] { return ops::mean(ops::exp(ops::matmul_nt(x, w))); };

  GradientMap g1, g2, g12;
  {
    Tape t;
    Tensor l;
    {
      TapeScope s(t);
      l = loss1();
    }
    g1 = backward(t, l, params);
  }
  {
    Tape t;
    Tensor l;
    {
      TapeScope s(t);
      l = loss2();
    }
    g2 = backward(t, l, params);
  }
  {
    Tape t;
    Tensor l;
    {
      TapeScope s(t);
      l = ops::add(loss1(), loss2());
    }
    g12 = backward(t, l, params);
  }
  for (const auto& [name, g] : g12) {
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], g1.at(name)[i] + g2.at(name)[i], 1e-12);
  }
}

TEST(Parameters, DuplicateNamesRejected) {
  const Tensor a = random_tensor({1}, 1);
  EXPECT_NO_THROW(check_unique_names({{"a", a, true}, {"b", a, true}}));
  EXPECT_THROW(check_unique_names({{"a", a, true}, {"a", a, true}}), InvalidArgument);
}

}  // namespace
