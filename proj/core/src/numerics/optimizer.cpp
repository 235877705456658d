// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/optimizer.hpp"

#include <cmath>
#include <string>

#include "memaudit/errors.hpp"

namespace memaudit::numerics {

Adam::Adam(const ParamSet& params, AdamOptions options) : options_(options) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.value.shape());
    v_.emplace_back(e.value.shape());
  }
}

void Adam::step(ParamSet& params, std::span<const Tensor> grads) {
  auto& entries = params.entries();
  if (grads.size() != entries.size() || m_.size() != entries.size()) {
    throw ShapeError("adam: expected " + std::to_string(m_.size()) +
                     " gradient tensors, got " + std::to_string(grads.size()));
  }
  for (std::size_t p = 0; p < entries.size(); ++p) {
    if (grads[p].shape() != entries[p].value.shape() ||
        grads[p].shape() != m_[p].shape()) {
      throw ShapeError("adam: gradient for " + entries[p].name + " has shape " +
                       shape_to_string(grads[p].shape()) + ", parameter is " +
                       shape_to_string(entries[p].value.shape()));
    }
    if (!grads[p].all_finite()) {
      throw NumericalError("adam: non-finite gradient for " + entries[p].name);
    }
  }

  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const Tensor& g = grads[p];
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    bool zero = true;
    for (double x : g.data()) zero = zero && x == 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    }
    if (zero) continue;
    Tensor& w = entries[p].value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

}  // namespace memaudit::numerics
