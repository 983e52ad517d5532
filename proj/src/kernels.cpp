#include "dited/kernels.hpp"

#include "dited/parallel.hpp"

namespace dited {

namespace {
constexpr int64_t kMatmulGrain = 8192;  // m*n*k below this stays serial
}

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    if (m * n * k < kMatmulGrain) {
        matmul_serial(a, b, c, m, k, n);
        return;
    }
    parallel_for(
        m,
        [&](int64_t i) {
            double* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
            const double* ai = a + i * k;
            for (int64_t p = 0; p < k; ++p) {
                const double aip = ai[p];
                const double* bp = b + p * n;
                for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
            }
        },
        1);
}

void matmul_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_grad_a(const double* dc, const double* b, double* da, int64_t m, int64_t k, int64_t n) {
    // da(m x k) += dc(m x n) * b^T(n x k)
    parallel_for(
        m,
        [&](int64_t i) {
            const double* dci = dc + i * n;
            double* dai = da + i * k;
            for (int64_t p = 0; p < k; ++p) {
                const double* bp = b + p * n;
                double acc = 0.0;
                for (int64_t j = 0; j < n; ++j) acc += dci[j] * bp[j];
                dai[p] += acc;
            }
        },
        m * n * k < kMatmulGrain ? m + 1 : 1);
}

void matmul_grad_b(const double* a, const double* dc, double* db, int64_t m, int64_t k, int64_t n) {
    // db(k x n) += a^T(k x m) * dc(m x n)
    parallel_for(
        k,
        [&](int64_t p) {
            double* dbp = db + p * n;
            for (int64_t i = 0; i < m; ++i) {
                const double aip = a[i * k + p];
                const double* dci = dc + i * n;
                for (int64_t j = 0; j < n; ++j) dbp[j] += aip * dci[j];
            }
        },
        m * n * k < kMatmulGrain ? k + 1 : 1);
}

}  // namespace dited
