// SPDX-License-Identifier: Apache-2.0
//
// Raw row-major dense kernels used by the layers. Every kernel accumulates
// into its output (C += ...); callers zero the output when they need "=".
// The *_parallel variants split output rows across OpenMP threads and give
// bitwise-identical results to the serial versions (each output element is
// produced by one thread with the same summation order).
#pragma once

#include <cstddef>

namespace flapnet::kernels {

// C[m×n] += A[m×k] · B[k×n]
void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n);
void gemm_parallel(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);

// C[k×n] += A[m×k]ᵀ · B[m×n]   (weight gradients)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);

// C[m×k] += A[m×n] · B[k×n]ᵀ   (input gradients)
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k);

// y[n] += x[k] · W[k×n]
inline void gemv_row(const double* x, const double* w, double* y,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < k; ++i) {
    const double xi = x[i];
    const double* wr = w + i * n;
    for (std::size_t j = 0; j < n; ++j) y[j] += xi * wr[j];
  }
}

// dx[k] += W[k×n] · dy[n]
inline void gemv_col(const double* w, const double* dy, double* dx,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < k; ++i) {
    const double* wr = w + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * dy[j];
    dx[i] += acc;
  }
}

// dW[k×n] += x[k] ⊗ dy[n]
inline void outer_acc(const double* x, const double* dy, double* dw,
                      std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < k; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* dwr = dw + i * n;
    for (std::size_t j = 0; j < n; ++j) dwr[j] += xi * dy[j];
  }
}

}  // namespace flapnet::kernels
