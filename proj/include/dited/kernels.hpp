#pragma once

#include <cstdint>

namespace dited {

// Low-level dense kernels. The parallel variants split work over independent
// output elements only; each element keeps the serial inner-loop order, so
// serial and parallel results are bit-identical (verified in tests and
// compared for speed by the bench target).

// C(m x n) = A(m x k) * B(k x n), parallel over rows of C.
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// Reference triple-loop matmul, kept serial.
void matmul_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// dA += dC * B^T and dB += A^T * dC (matmul backward), parallel over rows.
void matmul_grad_a(const double* dc, const double* b, double* da, int64_t m, int64_t k, int64_t n);
void matmul_grad_b(const double* a, const double* dc, double* db, int64_t m, int64_t k, int64_t n);

template <typename F>
void ewise_map(const double* x, double* y, int64_t n, F f);

template <typename F>
void ewise_zip(const double* a, const double* b, double* y, int64_t n, F f);

}  // namespace dited

#include "dited/parallel.hpp"

namespace dited {

template <typename F>
void ewise_map(const double* x, double* y, int64_t n, F f) {
    parallel_for(n, [&](int64_t i) { y[i] = f(x[i]); }, 16384);
}

template <typename F>
void ewise_zip(const double* a, const double* b, double* y, int64_t n, F f) {
    parallel_for(n, [&](int64_t i) { y[i] = f(a[i], b[i]); }, 16384);
}

}  // namespace dited
