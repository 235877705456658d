// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "memaudit/numerics/params.hpp"
#include "memaudit/numerics/tensor.hpp"

namespace memaudit::numerics {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. A parameter tensor whose gradient is exactly zero
/// only decays its moments; its values are left untouched.
class Adam {
 public:
  Adam(const ParamSet& params, AdamOptions options);

  /// Applies one update. Throws NumericalError on a non-finite gradient
  /// before touching any state.
  void step(ParamSet& params, std::span<const Tensor> grads);

  std::uint64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

}  // namespace memaudit::numerics
