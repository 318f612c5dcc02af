// SPDX-License-Identifier: Apache-2.0
#include "flapnet/kernels.hpp"

#include <cstdint>

namespace flapnet::kernels {

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    gemv_row(a + i * k, b, c + i * n, k, n);
  }
}

void gemm_parallel(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemv_row(a + r * k, b, c + r * n, k, n);
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) {
    outer_acc(a + r * k, b + r * n, c, k, n);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k) {
  for (std::size_t r = 0; r < m; ++r) {
    gemv_col(b, a + r * n, c + r * k, k, n);
  }
}

}  // namespace flapnet::kernels
