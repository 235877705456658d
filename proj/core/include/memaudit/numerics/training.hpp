// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "memaudit/numerics/grad_check.hpp"
#include "memaudit/numerics/optimizer.hpp"
#include "memaudit/numerics/params.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::numerics {

/// Records `fn` on a fresh tape, backpropagates and applies one optimizer
/// update. Returns the loss. Throws NumericalError on a non-finite loss
/// before touching the parameters.
double train_step(const LossFn& fn, ParamSet& params, Adam& optimizer);

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace memaudit::numerics
