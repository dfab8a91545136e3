// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "skycast/rng.hpp"
#include "skycast/tensor.hpp"

namespace skycast::testing {

// Entries uniform in [lo, hi), requires_grad set.
inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  Tensor t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "tmp") {
    path_ = std::filesystem::temp_directory_path() /
            ("skycast_" + tag + "_" + std::to_string(Rng(std::random_device{}()).next() % 1000000007ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline std::string read_file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace skycast::testing
