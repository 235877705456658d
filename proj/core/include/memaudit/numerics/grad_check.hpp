// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "memaudit/numerics/autodiff.hpp"
#include "memaudit/numerics/params.hpp"

namespace memaudit::numerics {

/// Builds a scalar loss on `tape` from the bound parameters. Inputs are
/// captured by the closure.
using LossFn = std::function<Var(Tape& tape, const BoundParams& params)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// 0 checks every entry; otherwise at most this many evenly strided
  /// entries per parameter tensor.
  std::size_t max_entries_per_param = 0;
  /// Denominator floor in |a - n| / max(|a| + |n|, floor).
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t checked = 0;
  bool finite = true;
  std::string worst_param;
  std::size_t worst_index = 0;

  bool passed(double tolerance) const {
    return finite && checked > 0 && max_rel_error < tolerance;
  }
};

/// Reverse-mode gradients of `fn` in ParamSet order.
std::vector<Tensor> analytic_gradients(const LossFn& fn, const ParamSet& params);

/// Compares `analytic` against central differences of `fn`.
GradCheckReport check_gradients(const LossFn& fn, const ParamSet& params,
                                const std::vector<Tensor>& analytic,
                                const GradCheckOptions& options = {});

GradCheckReport grad_check(const LossFn& fn, const ParamSet& params,
                           const GradCheckOptions& options = {});

}  // namespace memaudit::numerics
