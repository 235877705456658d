// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "memaudit/numerics/autodiff.hpp"
#include "memaudit/numerics/tensor.hpp"

namespace memaudit::numerics {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered, named parameter collection. Insertion order is the declared
/// ordering used by checkpoints and optimizers.
class ParamSet {
 public:
  void add(std::string name, Tensor value);

  Tensor& operator[](std::string_view name);
  const Tensor& operator[](std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<NamedTensor>& entries() { return entries_; }
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  /// Total number of scalar parameters.
  std::size_t scalar_count() const;

  bool all_finite() const;
  /// One line per parameter: name, shape.
  std::string shape_report() const;

  /// Rounds every value to the nearest 32-bit float, the checkpoint precision.
  void round_to_float();

 private:
  std::vector<NamedTensor> entries_;
};

/// Parameters placed on a tape as tracked leaves, addressable by name.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamSet& params, bool trainable = true);

  Var operator[](std::string_view name) const;
  const std::vector<Var>& vars() const { return vars_; }

  /// Gradients in ParamSet order, after tape.backward().
  std::vector<Tensor> gradients() const;

 private:
  const ParamSet* params_;
  std::vector<Var> vars_;
};

}  // namespace memaudit::numerics
