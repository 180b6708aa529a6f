#include "maskvid/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace maskvid::kernels {

namespace {

bool g_parallel = true;

constexpr std::size_t kSumBlock = 1024;

// Row bodies shared by the serial and OpenMP entry points. Rows are
// independent, so any row partition yields bit-identical results.

inline void nn_row(double* c, const double* a, const double* b, int k, int n,
                   bool accumulate) {
  if (!accumulate) std::fill(c, c + n, 0.0);
  for (int kk = 0; kk < k; ++kk) {
    const double av = a[kk];
    const double* brow = b + static_cast<std::size_t>(kk) * n;
    for (int j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline void nt_row(double* c, const double* a, const double* b, int k, int n,
                   bool accumulate) {
  for (int j = 0; j < n; ++j) {
    const double* brow = b + static_cast<std::size_t>(j) * k;
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    int kk = 0;
    for (; kk + 4 <= k; kk += 4) {
      acc0 += a[kk] * brow[kk];
      acc1 += a[kk + 1] * brow[kk + 1];
      acc2 += a[kk + 2] * brow[kk + 2];
      acc3 += a[kk + 3] * brow[kk + 3];
    }
    double acc = (acc0 + acc1) + (acc2 + acc3);
    for (; kk < k; ++kk) acc += a[kk] * brow[kk];
    c[j] = accumulate ? c[j] + acc : acc;
  }
}

// Output row m of A^T*B: sum over samples kk of A[kk,m] * B[kk,:].
inline void tn_row(double* c, const double* a, const double* b, int m_index,
                   int k, int m, int n, bool accumulate) {
  if (!accumulate) std::fill(c, c + n, 0.0);
  for (int kk = 0; kk < k; ++kk) {
    const double av = a[static_cast<std::size_t>(kk) * m + m_index];
    const double* brow = b + static_cast<std::size_t>(kk) * n;
    for (int j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline double sum_block_range(const double* x, std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += x[i];
  return s;
}

inline double sum_sq_diff_block_range(const double* a, const double* b,
                                      std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline void softmax_row(double* x, int cols) {
  double mx = x[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double denom = 0.0;
  for (int j = 0; j < cols; ++j) {
    x[j] = std::exp(x[j] - mx);
    denom += x[j];
  }
  const double inv = 1.0 / denom;
  for (int j = 0; j < cols; ++j) x[j] *= inv;
}

}  // namespace

void set_parallel(bool enabled) { g_parallel = enabled; }
bool parallel_enabled() { return g_parallel; }

void matmul_nn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (g_parallel)
  for (int i = 0; i < m; ++i)
    nn_row(c + static_cast<std::size_t>(i) * n,
           a + static_cast<std::size_t>(i) * k, b, k, n, accumulate);
}

void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (g_parallel)
  for (int i = 0; i < m; ++i)
    nt_row(c + static_cast<std::size_t>(i) * n,
           a + static_cast<std::size_t>(i) * k, b, k, n, accumulate);
}

void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (g_parallel)
  for (int i = 0; i < m; ++i)
    tn_row(c + static_cast<std::size_t>(i) * n, a, b, i, k, m, n, accumulate);
}

double block_sum(const double* x, std::size_t n) {
  const std::size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partial(nblocks);
#pragma omp parallel for schedule(static) if (g_parallel)
  for (long long bi = 0; bi < static_cast<long long>(nblocks); ++bi) {
    const std::size_t lo = static_cast<std::size_t>(bi) * kSumBlock;
    partial[bi] = sum_block_range(x, lo, std::min(lo + kSumBlock, n));
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

double block_sum_sq_diff(const double* a, const double* b, std::size_t n) {
  const std::size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partial(nblocks);
#pragma omp parallel for schedule(static) if (g_parallel)
  for (long long bi = 0; bi < static_cast<long long>(nblocks); ++bi) {
    const std::size_t lo = static_cast<std::size_t>(bi) * kSumBlock;
    partial[bi] = sum_sq_diff_block_range(a, b, lo, std::min(lo + kSumBlock, n));
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

void softmax_rows(double* x, int rows, int cols) {
#pragma omp parallel for schedule(static) if (g_parallel)
  for (int i = 0; i < rows; ++i)
    softmax_row(x + static_cast<std::size_t>(i) * cols, cols);
}

double compensated_sum(const double* x, std::size_t n) {
  double s = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = s + x[i];
    if (std::abs(s) >= std::abs(x[i]))
      comp += (s - t) + x[i];
    else
      comp += (x[i] - t) + s;
    s = t;
  }
  return s + comp;
}

namespace ref {

void matmul_nn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i)
    nn_row(c + static_cast<std::size_t>(i) * n,
           a + static_cast<std::size_t>(i) * k, b, k, n, accumulate);
}

void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i)
    nt_row(c + static_cast<std::size_t>(i) * n,
           a + static_cast<std::size_t>(i) * k, b, k, n, accumulate);
}

void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i)
    tn_row(c + static_cast<std::size_t>(i) * n, a, b, i, k, m, n, accumulate);
}

double block_sum(const double* x, std::size_t n) {
  const std::size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
  double s = 0.0;
  for (std::size_t bi = 0; bi < nblocks; ++bi) {
    const std::size_t lo = bi * kSumBlock;
    s += sum_block_range(x, lo, std::min(lo + kSumBlock, n));
  }
  return s;
}

double block_sum_sq_diff(const double* a, const double* b, std::size_t n) {
  const std::size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
  double s = 0.0;
  for (std::size_t bi = 0; bi < nblocks; ++bi) {
    const std::size_t lo = bi * kSumBlock;
    s += sum_sq_diff_block_range(a, b, lo, std::min(lo + kSumBlock, n));
  }
  return s;
}

void softmax_rows(double* x, int rows, int cols) {
  for (int i = 0; i < rows; ++i)
    softmax_row(x + static_cast<std::size_t>(i) * cols, cols);
}

}  // namespace ref

}  // namespace maskvid::kernels
