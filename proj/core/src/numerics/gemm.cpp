// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/gemm.hpp"

#include <cblas.h>

namespace memaudit::numerics {

void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, const double* b, double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  // One thread keeps reduction order, and therefore results, reproducible.
  static const bool single_threaded = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)single_threaded;
  const int lda = static_cast<int>(transpose_a ? m : k);
  const int ldb = static_cast<int>(transpose_b ? k : n);
  cblas_dgemm(CblasRowMajor, transpose_a ? CblasTrans : CblasNoTrans,
              transpose_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a, lda, b, ldb, 1.0, c,
              static_cast<int>(n));
}

}  // namespace memaudit::numerics
