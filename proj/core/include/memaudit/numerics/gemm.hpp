// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace memaudit::numerics {

/// C (m x n) += op(A) (m x k) * op(B) (k x n), all row-major and densely
/// packed. op transposes when the flag is set (A stored k x m, B stored n x k).
void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, const double* b, double* c);

}  // namespace memaudit::numerics
