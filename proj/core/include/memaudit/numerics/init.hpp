// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "memaudit/numerics/tensor.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::numerics {

/// Uniform in [-b, b] with b = gain * sqrt(3 / fan_in).
Tensor scaled_uniform(const Shape& shape, std::size_t fan_in, Rng& rng, double gain = 1.0);

/// Fan-in of a conv kernel [C_out,C_in,k,k,k] or dense weight [m,n].
std::size_t fan_in_of(const Shape& weight_shape);

}  // namespace memaudit::numerics
