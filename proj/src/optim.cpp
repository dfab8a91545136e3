// SPDX-License-Identifier: Apache-2.0
#include "skycast/optim.hpp"

#include <cmath>
#include <numbers>

#include "skycast/errors.hpp"
#include "skycast/ops.hpp"

namespace skycast {

void LossConfig::validate() const {
  if (!(m > 0.0)) throw ConfigError("loss.m must be positive");
  if (!(l2_coefficient >= 0.0)) throw ConfigError("loss.l2_coefficient must be >= 0");
}

double logcosh_value(double error, double m) {
  const double a = std::abs(error);
  const double lc = a > 30.0 ? a - std::numbers::ln2 : std::log(std::cosh(error));
  return lc + std::log(m);
}

Tensor logcosh_loss(const Tensor& truth, const Tensor& prediction, const LossConfig& cfg) {
  cfg.validate();
  Tensor loss = ops::mean(ops::log_cosh(ops::sub(prediction, truth)));
  if (cfg.m != 1.0) loss = ops::add(loss, Tensor::scalar(std::log(cfg.m)));
  return loss;
}

Tensor l2_penalty(const std::vector<Parameter>& params, double coefficient) {
  if (!(coefficient >= 0.0)) throw InvalidArgument("l2 coefficient must be >= 0");
  Tensor total = Tensor::scalar(0.0);
  if (coefficient == 0.0) return total;
  for (const auto& p : params) {
    if (!p.is_weight) continue;
    total = ops::add(total, ops::sum(ops::mul(p.tensor, p.tensor)));
  }
  return ops::scale(total, coefficient);
}

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam.epsilon must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("adam.learning_rate must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("adam.decay must be in (0, 1]");
}

Adam::Adam(std::vector<Parameter> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  check_unique_names(params_);
  for (const auto& p : params_) {
    moments_[p.name] = Moments{std::vector<double>(p.tensor.numel(), 0.0),
                               std::vector<double>(p.tensor.numel(), 0.0)};
  }
}

double Adam::learning_rate(std::size_t epoch) const {
  return cfg_.learning_rate * std::pow(cfg_.decay, static_cast<double>(epoch));
}

void Adam::step(const GradientMap& grads, std::size_t epoch) {
  for (const auto& p : params_) {
    const auto it = grads.find(p.name);
    if (it == grads.end()) throw InvalidArgument("adam: no gradient for parameter '" + p.name + "'");
    if (it->second.size() != p.tensor.numel()) {
      throw InvalidShape("adam: gradient for '" + p.name + "' has wrong size");
    }
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      if (!std::isfinite(it->second[i])) {
        throw NumericError("adam: non-finite gradient in '" + p.name + "' at index " + std::to_string(i));
      }
    }
  }
  ++steps_;
  const double lr = learning_rate(epoch);
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(cfg_.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& p : params_) {
    const auto& g = grads.at(p.name);
    auto& mom = moments_.at(p.name);
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      mom.first[i] = cfg_.beta1 * mom.first[i] + (1.0 - cfg_.beta1) * g[i];
      mom.second[i] = cfg_.beta2 * mom.second[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = mom.first[i] / correction1;
      const double v_hat = mom.second[i] / correction2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

void Adam::restore(std::uint64_t steps, std::map<std::string, Moments> moments) {
  for (const auto& p : params_) {
    const auto it = moments.find(p.name);
    if (it == moments.end() || it->second.first.size() != p.tensor.numel() ||
        it->second.second.size() != p.tensor.numel()) {
      throw ConfigError("optimizer state does not match parameter '" + p.name + "'");
    }
  }
  steps_ = steps;
  moments_ = std::move(moments);
}

}  // namespace skycast
