// SPDX-License-Identifier: Apache-2.0
#include "skycast/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "skycast/errors.hpp"
#include "skycast/rng.hpp"

namespace skycast {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw InvalidShape("tensor shape must have at least one dimension");
  for (const auto d : shape) {
    if (d == 0) throw InvalidShape("tensor shape " + shape_string(shape) + " has a zero dimension");
  }
}

std::pair<std::size_t, std::size_t> fan_in_out(const Shape& shape) {
  switch (shape.size()) {
    case 1:
      return {shape[0], shape[0]};
    case 2:
      return {shape[1], shape[0]};
    default: {
      std::size_t receptive = 1;
      for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
      return {shape[1] * receptive, shape[0] * receptive};
    }
  }
}

Tensor::Tensor(Shape shape, double fill) {
  validate_shape(shape);
  s_ = std::make_shared<Storage>();
  s_->data.assign(shape_numel(shape), fill);
  s_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
  validate_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw InvalidShape("shape " + shape_string(shape) + " does not match " +
                       std::to_string(data.size()) + " values");
  }
  s_ = std::make_shared<Storage>();
  s_->shape = std::move(shape);
  s_->data = std::move(data);
}

Tensor Tensor::create(const Shape& shape, Init init, std::uint64_t seed) {
  switch (init.kind) {
    case Init::Kind::kZeros:
      return Tensor(shape, 0.0);
    case Init::Kind::kOnes:
      return Tensor(shape, 1.0);
    case Init::Kind::kConstant:
      return Tensor(shape, init.value);
    case Init::Kind::kFanScaledUniform: {
      Tensor t(shape, 0.0);
      const auto [fan_in, fan_out] = fan_in_out(shape);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      Rng rng(seed);
      for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
      return t;
    }
  }
  throw InvalidArgument("unknown init scheme");
}

double Tensor::item() const {
  if (numel() != 1) {
    throw InvalidShape("item() needs a one-element tensor, got " + shape_string(shape()));
  }
  return s_->data[0];
}

const Tensor& Tensor::set_requires_grad(bool on) const {
  s_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() const {
  if (s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() const { s_->grad.assign(s_->data.size(), 0.0); }

void Tensor::clear_grad() const {
  s_->grad.clear();
  s_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const { return Tensor(s_->shape, s_->data); }

}  // namespace skycast
