#pragma once

#include <cstddef>

namespace diffret::kernels {

// Dense inner loops behind the tensor ops. Each kernel has a serial reference
// and an OpenMP variant that parallelizes over output elements only; every
// output element is accumulated in the same order in both, so results are
// bit-identical regardless of thread count. tools/bench_kernels compares them.

// c[m x n] = a[m x k] * b[k x n]
void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_omp(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_omp(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// Process-wide switch plus a size threshold: tiny products are not worth a
// parallel region. Defaults: enabled, threshold 16384 output-element-flops.
bool parallel_enabled();
void set_parallel_enabled(bool on);

// Dispatchers used by the tensor ops.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

}  // namespace diffret::kernels
