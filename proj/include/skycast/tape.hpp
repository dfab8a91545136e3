// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "skycast/tensor.hpp"

namespace skycast {

/// Ordered record of differentiable operations executed while the tape is
/// active. Entries are appended in execution order, so the tape is always in
/// topological order and backward is a single reverse sweep.
///
/// One tape per training step: create, run forward under a TapeScope, call
/// backward, then drop the tape.
class Tape {
 public:
  struct Entry {
    const char* op = "";
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }

  /// Resets every gradient on the tape, seeds d(loss)/d(loss) = 1 and runs
  /// each backward rule once in reverse order. Throws InvalidArgument when
  /// the loss is not a one-element tensor.
  void backward(const Tensor& loss);

  /// Number of rules executed by the most recent backward().
  std::size_t rules_run() const { return rules_run_; }

  void clear() { entries_.clear(); }

  /// Tape that ops currently record onto, or nullptr (inference).
  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Entry> entries_;
  std::size_t rules_run_ = 0;
};

/// Makes a tape active for the current thread for the scope's lifetime.
/// Scopes nest; passing nullptr suspends recording.
class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  explicit TapeScope(Tape& tape) : TapeScope(&tape) {}
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Trainable tensor with a dotted path name, e.g. "encoder.conv1.kernel".
struct Parameter {
  std::string name;
  Tensor tensor;
  /// Kernels and weight matrices take part in L2 regularization, biases not.
  bool is_weight = true;
};

using GradientMap = std::map<std::string, std::vector<double>>;

/// Throws InvalidArgument if two parameters share a name.
void check_unique_names(const std::vector<Parameter>& params);

/// Runs tape.backward(loss) and collects one gradient buffer per parameter.
/// Parameters that never reached the tape get an all-zero buffer.
GradientMap backward(Tape& tape, const Tensor& loss, const std::vector<Parameter>& params);

}  // namespace skycast
