// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "skycast/tensor.hpp"

namespace skycast {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares tape gradients of `forward` against central differences on
/// every coordinate of every input that requires grad.
///
/// Error per coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8);
/// the maximum is reported and `passed` is set against `tolerance`. Never
/// throws on disagreement.
GradCheckResult grad_check(const ScalarFn& forward, std::vector<Tensor> inputs, double step,
                           double tolerance);

}  // namespace skycast
