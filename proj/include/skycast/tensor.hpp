// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace skycast {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Throws InvalidShape unless the shape is non-empty with every dim >= 1.
void validate_shape(const Shape& shape);

/// Initialization schemes accepted by Tensor::create.
struct Init {
  enum class Kind { kZeros, kOnes, kConstant, kFanScaledUniform };
  Kind kind = Kind::kZeros;
  double value = 0.0;

  static Init zeros() { return {Kind::kZeros, 0.0}; }
  static Init ones() { return {Kind::kOnes, 1.0}; }
  static Init constant(double c) { return {Kind::kConstant, c}; }
  // Uniform in [-b, b] with b = sqrt(6 / (fan_in + fan_out)).
  static Init fan_scaled_uniform() { return {Kind::kFanScaledUniform, 0.0}; }
};

/// (fan_in, fan_out) used by the fan-scaled scheme. Rank-2 shapes are read
/// as [out, in]; rank-4 as [out_channels, in_channels, kh, kw].
std::pair<std::size_t, std::size_t> fan_in_out(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage, and constness
/// applies to the handle, not the storage. Ops never
/// modify their inputs; only optimizers write into parameter data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor create(const Shape& shape, Init init, std::uint64_t seed = 0);
  static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t numel() const { return s_->data.size(); }

  std::span<const double> data() const { return s_->data; }
  std::span<double> mutable_data() const { return s_->data; }
  double at(std::size_t i) const { return s_->data.at(i); }
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const { return s_ && s_->requires_grad; }
  const Tensor& set_requires_grad(bool on) const;

  bool has_grad() const { return s_ && !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  /// Gradient buffer, allocated zero-filled on first access.
  std::span<double> mutable_grad() const;
  void zero_grad() const;
  void clear_grad() const;

  /// Deep copy of the data, without gradient or grad tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

}  // namespace skycast
