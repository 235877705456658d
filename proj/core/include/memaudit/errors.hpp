// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace memaudit {

/// Operand shapes or dimensions do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared in a loss, gradient or parameter.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or argument outside its documented range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A stage input (file, checkpoint, manifest) does not exist.
class MissingDependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk data could not be decoded.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kTruncated, kUnknownDtype, kMalformed, kIo };

  FormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace memaudit
