// SPDX-License-Identifier: Apache-2.0
#include "skycast/layers.hpp"

#include "skycast/errors.hpp"

namespace skycast {

Conv2DLayer Conv2DLayer::create(std::size_t in_channels, std::size_t out_channels,
                                std::size_t kernel_size, std::size_t dilation, ops::Padding padding,
                                std::uint64_t seed) {
  Conv2DLayer layer;
  layer.kernel = Tensor::create({out_channels, in_channels, kernel_size, kernel_size},
                                Init::fan_scaled_uniform(), seed);
  layer.bias = Tensor::create({out_channels}, Init::zeros());
  layer.options.dilation_h = dilation;
  layer.options.dilation_w = dilation;
  layer.options.padding = padding;
  return layer;
}

std::size_t Conv2DLayer::receptive_field_h() const {
  return (kernel.dim(2) - 1) * options.dilation_h + 1;
}

std::size_t Conv2DLayer::receptive_field_w() const {
  return (kernel.dim(3) - 1) * options.dilation_w + 1;
}

void Conv2DLayer::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
  out.push_back({prefix + ".kernel", kernel, true});
  out.push_back({prefix + ".bias", bias, false});
}

Tensor conv2d(const Tensor& input, const Conv2DLayer& layer) {
  return ops::conv2d(input, layer.kernel, layer.bias, layer.options);
}

Tensor maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  return ops::maxpool2d(input, window, stride);
}

DenseLayer DenseLayer::create(std::size_t in, std::size_t out, std::uint64_t seed) {
  return {Tensor::create({out, in}, Init::fan_scaled_uniform(), seed), Tensor::create({out}, Init::zeros())};
}

void DenseLayer::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, false});
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.shape() != Shape{weight.dim(0)}) {
    throw InvalidShape("dense: weight " + shape_string(weight.shape()) + " and bias " +
                       shape_string(bias.shape()) + " are inconsistent");
  }
  if (input.rank() == 1) {
    if (input.dim(0) != weight.dim(1)) {
      throw InvalidShape("dense: input " + shape_string(input.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
    }
    const Tensor row = ops::reshape(input, {1, input.dim(0)});
    return ops::reshape(ops::add(ops::matmul_nt(row, weight), bias), {weight.dim(0)});
  }
  return ops::add(ops::matmul_nt(input, weight), bias);
}

Tensor dense(const Tensor& input, const DenseLayer& layer) {
  return dense(input, layer.weight, layer.bias);
}

Tensor dropout(const Tensor& input, const DropoutLayer& layer, Rng& rng) {
  if (!(layer.rate >= 0.0 && layer.rate < 1.0)) {
    throw InvalidArgument("dropout: rate must be in [0, 1), got " + std::to_string(layer.rate));
  }
  if (layer.mode == DropoutLayer::Mode::kInference || layer.rate == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - layer.rate);
  std::vector<double> mask(input.numel());
  for (double& m : mask) m = rng.uniform() < layer.rate ? 0.0 : keep_scale;
  return ops::mul(input, Tensor(input.shape(), std::move(mask)));
}

LSTMLayer LSTMLayer::create(std::size_t input_size, std::size_t hidden_size, std::uint64_t seed) {
  LSTMLayer layer;
  layer.weight_ih = Tensor::create({4 * hidden_size, input_size}, Init::fan_scaled_uniform(),
                                   derive_seed(seed, 1));
  layer.weight_hh = Tensor::create({4 * hidden_size, hidden_size}, Init::fan_scaled_uniform(),
                                   derive_seed(seed, 2));
  layer.bias = Tensor::create({4 * hidden_size}, Init::zeros());
  return layer;
}

void LSTMLayer::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
  out.push_back({prefix + ".weight_ih", weight_ih, true});
  out.push_back({prefix + ".weight_hh", weight_hh, true});
  out.push_back({prefix + ".bias", bias, false});
}

LSTMOutput lstm_sequence(const std::vector<Tensor>& inputs, const LSTMLayer& layer) {
  if (inputs.empty()) throw InvalidArgument("lstm_sequence: empty input sequence");
  const std::size_t d = layer.input_size();
  const std::size_t h = layer.hidden_size();
  const bool vector_form = inputs.front().rank() == 1;
  const std::size_t batch = vector_form ? 1 : inputs.front().dim(0);
  for (const auto& x : inputs) {
    const bool ok = vector_form ? (x.rank() == 1 && x.dim(0) == d)
                                : (x.rank() == 2 && x.dim(0) == batch && x.dim(1) == d);
    if (!ok) {
      throw InvalidShape("lstm_sequence: step input " + shape_string(x.shape()) +
                         " does not match input size " + std::to_string(d));
    }
  }

  LSTMOutput out;
  Tensor hidden(Shape{batch, h}, 0.0);
  Tensor cell(Shape{batch, h}, 0.0);
  for (const auto& x : inputs) {
    const Tensor xb = vector_form ? ops::reshape(x, {1, d}) : x;
    const Tensor gates =
        ops::add(ops::add(ops::matmul_nt(xb, layer.weight_ih), ops::matmul_nt(hidden, layer.weight_hh)),
                 layer.bias);
    const Tensor in_gate = ops::sigmoid(ops::slice(gates, 1, 0, h));
    const Tensor forget_gate = ops::sigmoid(ops::slice(gates, 1, h, 2 * h));
    const Tensor candidate = ops::tanh(ops::slice(gates, 1, 2 * h, 3 * h));
    const Tensor out_gate = ops::sigmoid(ops::slice(gates, 1, 3 * h, 4 * h));
    cell = ops::add(ops::mul(forget_gate, cell), ops::mul(in_gate, candidate));
    hidden = ops::mul(out_gate, ops::tanh(cell));
    out.hidden_states.push_back(vector_form ? ops::reshape(hidden, {h}) : hidden);
  }
  out.final_hidden = out.hidden_states.back();
  out.final_cell = vector_form ? ops::reshape(cell, {h}) : cell;
  return out;
}

}  // namespace skycast
