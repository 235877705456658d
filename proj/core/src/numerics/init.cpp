// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/init.hpp"

#include <cmath>

#include "memaudit/errors.hpp"

namespace memaudit::numerics {

Tensor scaled_uniform(const Shape& shape, std::size_t fan_in, Rng& rng, double gain) {
  if (fan_in == 0) throw ConfigError("scaled_uniform: fan_in must be positive");
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  Tensor t(shape, 0.0);
  for (double& x : t.data()) x = rng.uniform(-bound, bound);
  return t;
}

std::size_t fan_in_of(const Shape& w) {
  if (w.size() < 2) throw ShapeError("fan_in_of: weight must have rank >= 2");
  std::size_t n = 1;
  for (std::size_t i = 1; i < w.size(); ++i) n *= w[i];
  return n;
}

}  // namespace memaudit::numerics
