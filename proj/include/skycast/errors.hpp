// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace skycast {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/layer shape contract violated.
class InvalidShape : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an op (e.g. log of 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// NaN/overflow detected during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent dataset content.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  DecodeError(const std::string& path, const std::string& what)
      : Error("cannot decode image '" + path + "': " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Invalid model/run configuration (unknown key, violated invariant,
/// checkpoint/config mismatch).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Evaluation metric is undefined on the given slice (e.g. nMAP with a
/// non-positive mean truth).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

}  // namespace skycast
