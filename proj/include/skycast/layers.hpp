// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skycast/ops.hpp"
#include "skycast/rng.hpp"
#include "skycast/tape.hpp"
#include "skycast/tensor.hpp"

namespace skycast {

/// Dilated 2-D convolution layer.
struct Conv2DLayer {
  Tensor kernel;  // [out_channels, in_channels, kh, kw]
  Tensor bias;    // [out_channels]
  ops::Conv2DOptions options;

  /// Fan-scaled uniform kernel, zero bias.
  static Conv2DLayer create(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                            std::size_t dilation, ops::Padding padding, std::uint64_t seed);

  std::size_t in_channels() const { return kernel.dim(1); }
  std::size_t out_channels() const { return kernel.dim(0); }
  /// (k - 1) * l + 1 along each axis.
  std::size_t receptive_field_h() const;
  std::size_t receptive_field_w() const;
  std::size_t parameter_count() const { return kernel.numel() + bias.numel(); }
  void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

Tensor conv2d(const Tensor& input, const Conv2DLayer& layer);

/// 2x2 / stride-2 pooling unless told otherwise.
Tensor maxpool2d(const Tensor& input, std::size_t window = 2, std::size_t stride = 2);

/// Affine layer y = W x + b with W stored [out, in].
struct DenseLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static DenseLayer create(std::size_t in, std::size_t out, std::uint64_t seed);
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  std::size_t parameter_count() const { return weight.numel() + bias.numel(); }
  void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// Input [n] or [N,n]; output [m] or [N,m].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor dense(const Tensor& input, const DenseLayer& layer);

struct DropoutLayer {
  enum class Mode { kTraining, kInference };
  double rate = 0.3;
  Mode mode = Mode::kInference;
};

/// Inverted dropout. Identity in inference mode or at rate 0; in training
/// mode each element is zeroed with probability `rate` and survivors are
/// scaled by 1/(1-rate). Throws InvalidArgument unless 0 <= rate < 1.
Tensor dropout(const Tensor& input, const DropoutLayer& layer, Rng& rng);

/// LSTM with gate order (input, forget, cell, output).
struct LSTMLayer {
  Tensor weight_ih;  // [4h, d]
  Tensor weight_hh;  // [4h, h]
  Tensor bias;       // [4h]

  static LSTMLayer create(std::size_t input_size, std::size_t hidden_size, std::uint64_t seed);
  std::size_t input_size() const { return weight_ih.dim(1); }
  std::size_t hidden_size() const { return weight_hh.dim(1); }
  /// 4 (d + h + 1) h
  std::size_t parameter_count() const { return weight_ih.numel() + weight_hh.numel() + bias.numel(); }
  void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

struct LSTMOutput {
  std::vector<Tensor> hidden_states;  // one per step, [h] or [N,h]
  Tensor final_hidden;
  Tensor final_cell;
};

/// Runs the recurrence from zero hidden and cell states. Each input is [d]
/// or [N,d] (all steps the same form). Throws InvalidArgument on an empty
/// sequence and InvalidShape on a size mismatch.
LSTMOutput lstm_sequence(const std::vector<Tensor>& inputs, const LSTMLayer& layer);

}  // namespace skycast
