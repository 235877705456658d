// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "memaudit/errors.hpp"

namespace memaudit::numerics {
namespace {

double evaluate(const LossFn& fn, const ParamSet& params) {
  Tape tape;
  BoundParams bound(tape, params, /*trainable=*/false);
  return fn(tape, bound).value().item();
}

}  // namespace

std::vector<Tensor> analytic_gradients(const LossFn& fn, const ParamSet& params) {
  Tape tape;
  BoundParams bound(tape, params);
  Var loss = fn(tape, bound);
  tape.backward(loss);
  return bound.gradients();
}

GradCheckReport check_gradients(const LossFn& fn, const ParamSet& params,
                                const std::vector<Tensor>& analytic,
                                const GradCheckOptions& options) {
  if (!(options.eps > 0.0 && options.eps <= 1e-2)) {
    throw ConfigError("grad_check: eps must lie in (0, 1e-2]");
  }
  if (analytic.size() != params.size()) {
    throw ShapeError("grad_check: analytic gradient count mismatch");
  }
  GradCheckReport report;
  ParamSet probe = params;
  double total = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    Tensor& w = probe.entries()[p].value;
    const std::size_t n = w.size();
    const std::size_t stride =
        options.max_entries_per_param == 0
            ? 1
            : std::max<std::size_t>(1, n / options.max_entries_per_param);
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = w[i];
      w[i] = original + options.eps;
      const double up = evaluate(fn, probe);
      w[i] = original - options.eps;
      const double down = evaluate(fn, probe);
      w[i] = original;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[p][i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        report.finite = false;
        report.worst_param = probe.entries()[p].name;
        report.worst_index = i;
        continue;
      }
      const double rel = std::abs(a - numeric) /
                         std::max(std::abs(a) + std::abs(numeric), options.floor);
      total += rel;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        if (report.finite) {
          report.worst_param = probe.entries()[p].name;
          report.worst_index = i;
        }
      }
    }
  }
  if (report.checked > 0) {
    report.mean_rel_error = total / static_cast<double>(report.checked);
  }
  return report;
}

GradCheckReport grad_check(const LossFn& fn, const ParamSet& params,
                           const GradCheckOptions& options) {
  return check_gradients(fn, params, analytic_gradients(fn, params), options);
}

}  // namespace memaudit::numerics
