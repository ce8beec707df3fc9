#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "tsic/kernels.hpp"

// AVX2+FMA variants. Compiled with -mavx2 -mfma; only reached through the
// dispatch table after a cpuid check. Reduction order differs from the
// scalar reference (4-lane partial sums), so dot/matvec agree with it to
// rounding, not bit-exactly; elementwise kernels match exactly.
namespace tsic::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

}  // namespace

void matvec(std::span<double> y, std::span<const double> w,
            std::span<const double> x, std::span<const double> bias,
            std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = w.data() + i * cols;
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      __m256d wv = _mm256_loadu_pd(row + j);
      __m256d xv = _mm256_loadu_pd(x.data() + j);
      acc = _mm256_fmadd_pd(wv, xv, acc);
    }
    double s = hsum(acc);
    for (; j < cols; ++j) s += row[j] * x[j];
    y[i] = s + (bias.empty() ? 0.0 : bias[i]);
  }
}

void matvec_t_acc(std::span<double> xgrad, std::span<const double> w,
                  std::span<const double> g, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    const double* row = w.data() + i * cols;
    const __m256d gv = _mm256_set1_pd(gi);
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      __m256d acc = _mm256_loadu_pd(xgrad.data() + j);
      acc = _mm256_fmadd_pd(gv, _mm256_loadu_pd(row + j), acc);
      _mm256_storeu_pd(xgrad.data() + j, acc);
    }
    for (; j < cols; ++j) xgrad[j] += gi * row[j];
  }
}

void outer_acc(std::span<double> wgrad, std::span<const double> g,
               std::span<const double> x, std::size_t rows,
               std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    double* row = wgrad.data() + i * cols;
    const __m256d gv = _mm256_set1_pd(gi);
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      __m256d acc = _mm256_loadu_pd(row + j);
      acc = _mm256_fmadd_pd(gv, _mm256_loadu_pd(x.data() + j), acc);
      _mm256_storeu_pd(row + j, acc);
    }
    for (; j < cols; ++j) row[j] += gi * x[j];
  }
}

void relu(std::span<double> v) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= v.size(); i += 4) {
    __m256d e = _mm256_loadu_pd(v.data() + i);
    _mm256_storeu_pd(v.data() + i, _mm256_max_pd(e, zero));
  }
  for (; i < v.size(); ++i)
    if (v[i] < 0.0) v[i] = 0.0;
}

void relu_backward(std::span<double> grad, std::span<const double> pre) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= grad.size(); i += 4) {
    __m256d p = _mm256_loadu_pd(pre.data() + i);
    __m256d g = _mm256_loadu_pd(grad.data() + i);
    __m256d mask = _mm256_cmp_pd(p, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(grad.data() + i, _mm256_and_pd(g, mask));
  }
  for (; i < grad.size(); ++i)
    if (pre[i] <= 0.0) grad[i] = 0.0;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= y.size(); i += 4) {
    __m256d acc = _mm256_loadu_pd(y.data() + i);
    acc = _mm256_fmadd_pd(av, _mm256_loadu_pd(x.data() + i), acc);
    _mm256_storeu_pd(y.data() + i, acc);
  }
  for (; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= a.size(); i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i),
                          _mm256_loadu_pd(b.data() + i), acc);
  }
  double s = hsum(acc);
  for (; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace tsic::kernels::avx2

#endif  // x86_64
