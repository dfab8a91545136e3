// SPDX-License-Identifier: Apache-2.0
#include "skycast/tape.hpp"

#include <set>

#include "skycast/errors.hpp"

namespace skycast {
namespace {
thread_local Tape* g_active = nullptr;
}

Tape* Tape::active() { return g_active; }

TapeScope::TapeScope(Tape* tape) : previous_(g_active) { g_active = tape; }
TapeScope::~TapeScope() { g_active = previous_; }

void Tape::record(const char* op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> backward) {
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw InvalidArgument("backward() needs a scalar loss, got " +
                          (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (in.requires_grad()) in.zero_grad();
    }
    e.output.zero_grad();
  }
  rules_run_ = 0;
  if (!loss.requires_grad()) return;
  Tensor seed = loss;
  seed.mutable_grad()[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->backward();
    ++rules_run_;
  }
}

void check_unique_names(const std::vector<Parameter>& params) {
  std::set<std::string> seen;
  for (const auto& p : params) {
    if (!seen.insert(p.name).second) throw InvalidArgument("duplicate parameter name '" + p.name + "'");
  }
}

GradientMap backward(Tape& tape, const Tensor& loss, const std::vector<Parameter>& params) {
  for (auto p : params) p.tensor.clear_grad();
  tape.backward(loss);
  GradientMap grads;
  for (const auto& p : params) {
    if (p.tensor.has_grad()) {
      grads[p.name].assign(p.tensor.grad().begin(), p.tensor.grad().end());
    } else {
      grads[p.name].assign(p.tensor.numel(), 0.0);
    }
  }
  return grads;
}

}  // namespace skycast
