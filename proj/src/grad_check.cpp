// SPDX-License-Identifier: Apache-2.0
#include "skycast/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "skycast/errors.hpp"
#include "skycast/tape.hpp"

namespace skycast {

GradCheckResult grad_check(const ScalarFn& forward, std::vector<Tensor> inputs, double step,
                           double tolerance) {
  if (!(step > 0.0)) throw InvalidArgument("grad_check: step must be positive");
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    Tape tape;
    TapeScope scope(tape);
    for (auto& in : inputs) {
      if (in.requires_grad()) in.clear_grad();
    }
    const Tensor loss = forward(inputs);
    tape.backward(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      if (inputs[i].has_grad()) {
        analytic[i].assign(inputs[i].grad().begin(), inputs[i].grad().end());
      } else {
        analytic[i].assign(inputs[i].numel(), 0.0);
      }
    }
  }

  GradCheckResult result;
  TapeScope no_tape(nullptr);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto values = inputs[i].mutable_data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + step;
      const double up = forward(inputs).item();
      values[j] = saved - step;
      const double down = forward(inputs).item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      if (err > result.max_relative_error || std::isnan(err)) {
        result.max_relative_error = std::isnan(err) ? INFINITY : err;
        result.worst_input = i;
        result.worst_index = j;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  result.passed = result.max_relative_error <= tolerance;
  return result;
}

}  // namespace skycast
