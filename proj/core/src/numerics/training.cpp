// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/training.hpp"

#include <numeric>
#include <utility>

namespace memaudit::numerics {

double train_step(const LossFn& fn, ParamSet& params, Adam& optimizer) {
  Tape tape;
  BoundParams bound(tape, params);
  const Var loss = fn(tape, bound);
  tape.backward(loss);
  const double value = loss.value().item();
  const std::vector<Tensor> grads = bound.gradients();
  optimizer.step(params, grads);
  return value;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  return idx;
}

}  // namespace memaudit::numerics
