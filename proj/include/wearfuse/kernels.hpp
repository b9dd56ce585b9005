#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wearfuse::kernels {

// Dense kernels in two variants: a serial reference and an OpenMP-parallel
// version. Both compute every output element with the same fixed reduction
// order, so their results are bit-identical; the parallel variants only
// distribute independent output elements across threads. The unsuffixed
// functions dispatch on problem size.

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Work thresholds below which the dispatchers stay serial.
inline constexpr std::size_t kMatmulGrain = 64 * 1024;  // multiply-adds
inline constexpr std::size_t kMapGrain = 32 * 1024;     // elements

// C[m x n] = A * B with optional transposed storage: when ta, A is stored
// [k x m]; when tb, B is stored [n x k]. C is overwritten.
void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool ta = false, bool tb = false);
void matmul_parallel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool ta = false, bool tb = false);
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool ta = false, bool tb = false);

// y[n] = x[k] * B[k x n]
void vecmat_serial(const double* x, const double* b, double* y, std::size_t k, std::size_t n);
void vecmat_parallel(const double* x, const double* b, double* y, std::size_t k, std::size_t n);
void vecmat(const double* x, const double* b, double* y, std::size_t k, std::size_t n);

// y[k] = B[k x n] * g[n]
void matvec_serial(const double* b, const double* g, double* y, std::size_t k, std::size_t n);
void matvec_parallel(const double* b, const double* g, double* y, std::size_t k, std::size_t n);
void matvec(const double* b, const double* g, double* y, std::size_t k, std::size_t n);

// C[k x n] = x[k] outer g[n]
void outer_serial(const double* x, const double* g, double* c, std::size_t k, std::size_t n);
void outer_parallel(const double* x, const double* g, double* c, std::size_t k, std::size_t n);
void outer(const double* x, const double* g, double* c, std::size_t k, std::size_t n);

// Column sums: y[j] = sum_i X[i x j], X is [m x n].
void colsum_serial(const double* x, double* y, std::size_t m, std::size_t n);
void colsum_parallel(const double* x, double* y, std::size_t m, std::size_t n);
void colsum(const double* x, double* y, std::size_t m, std::size_t n);

// Row sums: y[i] = sum_j X[i x j].
void rowsum_serial(const double* x, double* y, std::size_t m, std::size_t n);
void rowsum_parallel(const double* x, double* y, std::size_t m, std::size_t n);
void rowsum(const double* x, double* y, std::size_t m, std::size_t n);

// Full sum in index order (kept serial everywhere: a parallel tree reduction
// would change the accumulation order and with it the bits).
double sum_serial(const double* x, std::size_t n);

template <class F>
void map_serial(const double* x, double* y, std::size_t n, F f) {
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <class F>
void map_parallel(const double* x, double* y, std::size_t n, F f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    y[i] = f(x[static_cast<std::size_t>(i)]);
#else
  map_serial(x, y, n, f);
#endif
}

template <class F>
void map(const double* x, double* y, std::size_t n, F f) {
  if (n >= kMapGrain && max_threads() > 1)
    map_parallel(x, y, n, f);
  else
    map_serial(x, y, n, f);
}

template <class F>
void zip_serial(const double* a, const double* b, double* y, std::size_t n, F f) {
  for (std::size_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
}

template <class F>
void zip_parallel(const double* a, const double* b, double* y, std::size_t n, F f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    y[i] = f(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(i)]);
#else
  zip_serial(a, b, y, n, f);
#endif
}

template <class F>
void zip(const double* a, const double* b, double* y, std::size_t n, F f) {
  if (n >= kMapGrain && max_threads() > 1)
    zip_parallel(a, b, y, n, f);
  else
    zip_serial(a, b, y, n, f);
}

}  // namespace wearfuse::kernels
