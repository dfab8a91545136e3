// SPDX-License-Identifier: Apache-2.0
//
// Training objective and optimizer: log-cosh loss with L2 regularization,
// Adam with an exponentially decaying per-epoch learning rate.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "skycast/tape.hpp"
#include "skycast/tensor.hpp"

namespace skycast {

struct LossConfig {
  /// Scale constant inside log(m * cosh(e)); shifts the loss by log m only.
  double m = 1.0;
  double l2_coefficient = 0.0;

  void validate() const;
};

/// Scalar log(m * cosh(e)) with the large-|e| asymptote.
double logcosh_value(double error, double m = 1.0);

/// Mean over all elements of log(m * cosh(truth - prediction)).
Tensor logcosh_loss(const Tensor& truth, const Tensor& prediction, const LossConfig& cfg);

/// coefficient * sum of squared entries over weight parameters (biases are
/// skipped). Returns a one-element tensor.
Tensor l2_penalty(const std::vector<Parameter>& params, double coefficient);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
  /// Learning rate at epoch t is learning_rate * decay^t.
  double decay = 0.95;

  void validate() const;
};

/// Adam with bias correction. Owns first/second moment buffers keyed by
/// parameter name; parameters are updated in place.
class Adam {
 public:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  Adam(std::vector<Parameter> params, AdamConfig cfg);

  /// One update using the learning rate of `epoch`. Throws NumericError
  /// (leaving every parameter untouched) if any gradient is non-finite and
  /// InvalidArgument if a parameter has no gradient.
  void step(const GradientMap& grads, std::size_t epoch);

  double learning_rate(std::size_t epoch) const;
  std::uint64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  const std::map<std::string, Moments>& moments() const { return moments_; }
  /// Restores optimizer state (e.g. from a checkpoint).
  void restore(std::uint64_t steps, std::map<std::string, Moments> moments);

 private:
  std::vector<Parameter> params_;
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace skycast
