#pragma once

#include <cstddef>

// Dense f64 kernels used by the codec, denoiser and trainer. Every kernel
// computes each output element with a fixed operation order, so the OpenMP
// versions are bit-identical to the serial references in kernels::ref for
// any thread count. Reductions go through a fixed 1024-element blocking for
// the same reason.
namespace maskvid::kernels {

// Runtime switch for the OpenMP paths. Tests flip this to compare against
// the serial references; the default is on.
void set_parallel(bool enabled);
bool parallel_enabled();

// C[M x N] (+)= A[M x K] * B[K x N], all row-major.
void matmul_nn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);

// C[M x N] (+)= A[M x K] * B^T with B stored [N x K].
void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);

// C[M x N] (+)= A^T * B with A stored [K x M], B stored [K x N].
void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);

// Blocked sum of x[0..n): per-block serial sums in block order. Deterministic
// for any thread count.
double block_sum(const double* x, std::size_t n);

// Blocked sum of (a[i]-b[i])^2.
double block_sum_sq_diff(const double* a, const double* b, std::size_t n);

// Row-wise softmax in place on x[rows x cols] (max-subtracted).
void softmax_rows(double* x, int rows, int cols);

// Neumaier compensated sum; serial, order-exact. Used for metric aggregation.
double compensated_sum(const double* x, std::size_t n);

namespace ref {
// Serial references: same per-element operation order as the parallel
// kernels above, no OpenMP. Kept for tests and the benchmark.
void matmul_nn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);
void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);
void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);
double block_sum(const double* x, std::size_t n);
double block_sum_sq_diff(const double* a, const double* b, std::size_t n);
void softmax_rows(double* x, int rows, int cols);
}  // namespace ref

}  // namespace maskvid::kernels
