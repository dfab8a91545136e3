// SPDX-License-Identifier: Apache-2.0
//
// Self-describing model container:
//   "SKYCKPT1" | u64 json length | json header | u64 array count |
//   per array: u64 name length, name, u64 rank, u64 dims..., f64 data...
// All integers and doubles are little-endian.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skycast/tensor.hpp"

namespace skycast {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  nlohmann::json header;  // carries "kind" and the model config
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
  bool has(const std::string& name) const;
  void add(std::string name, const Tensor& t);
  void add(std::string name, Shape shape, std::vector<double> data);
};

/// Throws IoError on write failure.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError if unreadable and DataError on a malformed container.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies array data into an existing tensor of the same shape; throws
/// ConfigError naming the array on a missing entry or shape mismatch.
void load_into(const Checkpoint& ckpt, const std::string& name, const Tensor& target);

}  // namespace skycast
