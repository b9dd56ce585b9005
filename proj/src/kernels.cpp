#include "wearfuse/kernels.hpp"

namespace wearfuse::kernels {

namespace {

// One output row of C = A * B. Every c[i][j] accumulates over k in ascending
// order regardless of operand storage, which pins the floating-point result.
inline void matmul_row(const double* a, const double* b, double* c, std::size_t i, std::size_t m,
                       std::size_t k, std::size_t n, bool ta, bool tb) {
  double* crow = c + i * n;
  for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  if (!tb) {
    // a(i,kk) * contiguous row of B
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ta ? a[kk * m + i] : a[i * k + kk];
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else {
    // B stored [n x k]: dot products over contiguous rows of B
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = ta ? a[kk * m + i] : a[i * k + kk];
        acc += av * brow[kk];
      }
      crow[j] = acc;
    }
  }
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool ta, bool tb) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, c, i, m, k, n, ta, tb);
}

void matmul_parallel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool ta, bool tb) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i)
    matmul_row(a, b, c, static_cast<std::size_t>(i), m, k, n, ta, tb);
#else
  matmul_serial(a, b, c, m, k, n, ta, tb);
#endif
}

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool ta, bool tb) {
  if (m >= 2 && m * k * n >= kMatmulGrain && max_threads() > 1)
    matmul_parallel(a, b, c, m, k, n, ta, tb);
  else
    matmul_serial(a, b, c, m, k, n, ta, tb);
}

void vecmat_serial(const double* x, const double* b, double* y, std::size_t k, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] = 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double xv = x[kk];
    const double* brow = b + kk * n;
    for (std::size_t j = 0; j < n; ++j) y[j] += xv * brow[j];
  }
}

void vecmat_parallel(const double* x, const double* b, double* y, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long j = 0; j < static_cast<long long>(n); ++j) {
    double acc = 0.0;
    for (std::size_t kk = 0; kk < k; ++kk) acc += x[kk] * b[kk * n + j];
    y[j] = acc;
  }
#else
  vecmat_serial(x, b, y, k, n);
#endif
}

void vecmat(const double* x, const double* b, double* y, std::size_t k, std::size_t n) {
  if (k * n >= kMatmulGrain && max_threads() > 1)
    vecmat_parallel(x, b, y, k, n);
  else
    vecmat_serial(x, b, y, k, n);
}

void matvec_serial(const double* b, const double* g, double* y, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < k; ++i) {
    const double* brow = b + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += brow[j] * g[j];
    y[i] = acc;
  }
}

void matvec_parallel(const double* b, const double* g, double* y, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(k); ++i) {
    const double* brow = b + static_cast<std::size_t>(i) * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += brow[j] * g[j];
    y[i] = acc;
  }
#else
  matvec_serial(b, g, y, k, n);
#endif
}

void matvec(const double* b, const double* g, double* y, std::size_t k, std::size_t n) {
  if (k * n >= kMatmulGrain && max_threads() > 1)
    matvec_parallel(b, g, y, k, n);
  else
    matvec_serial(b, g, y, k, n);
}

void outer_serial(const double* x, const double* g, double* c, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < k; ++i) {
    const double xv = x[i];
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = xv * g[j];
  }
}

void outer_parallel(const double* x, const double* g, double* c, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(k); ++i) {
    const double xv = x[static_cast<std::size_t>(i)];
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = xv * g[j];
  }
#else
  outer_serial(x, g, c, k, n);
#endif
}

void outer(const double* x, const double* g, double* c, std::size_t k, std::size_t n) {
  if (k * n >= kMapGrain && max_threads() > 1)
    outer_parallel(x, g, c, k, n);
  else
    outer_serial(x, g, c, k, n);
}

void colsum_serial(const double* x, double* y, std::size_t m, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += x[i * n + j];
    y[j] = acc;
  }
}

void colsum_parallel(const double* x, double* y, std::size_t m, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long j = 0; j < static_cast<long long>(n); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += x[i * n + static_cast<std::size_t>(j)];
    y[j] = acc;
  }
#else
  colsum_serial(x, y, m, n);
#endif
}

void colsum(const double* x, double* y, std::size_t m, std::size_t n) {
  if (m * n >= kMapGrain && max_threads() > 1)
    colsum_parallel(x, y, m, n);
  else
    colsum_serial(x, y, m, n);
}

void rowsum_serial(const double* x, double* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j];
    y[i] = acc;
  }
}

void rowsum_parallel(const double* x, double* y, std::size_t m, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i) {
    const double* row = x + static_cast<std::size_t>(i) * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j];
    y[i] = acc;
  }
#else
  rowsum_serial(x, y, m, n);
#endif
}

void rowsum(const double* x, double* y, std::size_t m, std::size_t n) {
  if (m * n >= kMapGrain && max_threads() > 1)
    rowsum_parallel(x, y, m, n);
  else
    rowsum_serial(x, y, m, n);
}

double sum_serial(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace wearfuse::kernels
