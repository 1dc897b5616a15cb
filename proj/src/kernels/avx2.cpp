// AVX2+FMA kernels. Each lane executes the same operation sequence as the
// scalar reference (k-ascending fma accumulation, IEEE sqrt/div), so results
// are bit-identical to the scalar table; the equivalence tests assert this.

#include "probelab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace probelab::kernels {
namespace avx2 {

void matmul_f32(const float* a, const float* b, float* c, size_t m, size_t k,
                size_t n, bool accumulate) {
  for (size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256 acc0 = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
      __m256 acc1 =
          accumulate ? _mm256_loadu_ps(crow + j + 8) : _mm256_setzero_ps();
      for (size_t kk = 0; kk < k; ++kk) {
        const __m256 av = _mm256_set1_ps(arow[kk]);
        const float* brow = b + kk * n + j;
        acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow), acc0);
        acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 8), acc1);
      }
      _mm256_storeu_ps(crow + j, acc0);
      _mm256_storeu_ps(crow + j + 8, acc1);
    }
    for (; j + 8 <= n; j += 8) {
      __m256 acc = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
      for (size_t kk = 0; kk < k; ++kk)
        acc = _mm256_fmadd_ps(_mm256_set1_ps(arow[kk]),
                              _mm256_loadu_ps(b + kk * n + j), acc);
      _mm256_storeu_ps(crow + j, acc);
    }
    for (; j < n; ++j) {
      float acc = accumulate ? crow[j] : 0.0f;
      for (size_t kk = 0; kk < k; ++kk) acc = std::fma(arow[kk], b[kk * n + j], acc);
      crow[j] = acc;
    }
  }
}

void matmul_f64(const double* a, const double* b, double* c, size_t m,
                size_t k, size_t n, bool accumulate) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d acc0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      __m256d acc1 =
          accumulate ? _mm256_loadu_pd(crow + j + 4) : _mm256_setzero_pd();
      for (size_t kk = 0; kk < k; ++kk) {
        const __m256d av = _mm256_set1_pd(arow[kk]);
        const double* brow = b + kk * n + j;
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), acc1);
      }
      _mm256_storeu_pd(crow + j, acc0);
      _mm256_storeu_pd(crow + j + 4, acc1);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d acc = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      for (size_t kk = 0; kk < k; ++kk)
        acc = _mm256_fmadd_pd(_mm256_set1_pd(arow[kk]),
                              _mm256_loadu_pd(b + kk * n + j), acc);
      _mm256_storeu_pd(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = accumulate ? crow[j] : 0.0;
      for (size_t kk = 0; kk < k; ++kk) acc = std::fma(arow[kk], b[kk * n + j], acc);
      crow[j] = acc;
    }
  }
}

void add_f32(const float* a, const float* b, float* c, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] + b[i];
}

void add_f64(const double* a, const double* b, double* c, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] + b[i];
}

void mul_f32(const float* a, const float* b, float* c, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] * b[i];
}

void mul_f64(const double* a, const double* b, double* c, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] * b[i];
}

void axpy_f32(float alpha, const float* x, float* y, size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void axpy_f64(double alpha, const double* x, double* y, size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_f32(float alpha, const float* x, float* y, size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void scale_f64(double alpha, const double* x, double* y, size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void adam_update_f32(float* param, const float* grad, float* m, float* v,
                     size_t n, float lr, float beta1, float beta2, float eps,
                     float c1, float c2) {
  const float omb1 = 1.0f - beta1;
  const float omb2 = 1.0f - beta2;
  const __m256 b1v = _mm256_set1_ps(beta1);
  const __m256 b2v = _mm256_set1_ps(beta2);
  const __m256 omb1v = _mm256_set1_ps(omb1);
  const __m256 omb2v = _mm256_set1_ps(omb2);
  const __m256 c1v = _mm256_set1_ps(c1);
  const __m256 c2v = _mm256_set1_ps(c2);
  const __m256 epsv = _mm256_set1_ps(eps);
  const __m256 nlrv = _mm256_set1_ps(-lr);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_fmadd_ps(b1v, mv, _mm256_mul_ps(omb1v, g));
    vv = _mm256_fmadd_ps(b2v, vv, _mm256_mul_ps(omb2v, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_div_ps(mv, c1v);
    const __m256 vhat = _mm256_div_ps(vv, c2v);
    const __m256 u =
        _mm256_div_ps(mhat, _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv));
    _mm256_storeu_ps(param + i,
                     _mm256_fmadd_ps(nlrv, u, _mm256_loadu_ps(param + i)));
  }
  for (; i < n; ++i) {
    const float g = grad[i];
    m[i] = std::fma(beta1, m[i], omb1 * g);
    v[i] = std::fma(beta2, v[i], omb2 * (g * g));
    const float u = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    param[i] = std::fma(-lr, u, param[i]);
  }
}

void adam_update_f64(double* param, const double* grad, double* m, double* v,
                     size_t n, double lr, double beta1, double beta2,
                     double eps, double c1, double c2) {
  const double omb1 = 1.0 - beta1;
  const double omb2 = 1.0 - beta2;
  const __m256d b1v = _mm256_set1_pd(beta1);
  const __m256d b2v = _mm256_set1_pd(beta2);
  const __m256d omb1v = _mm256_set1_pd(omb1);
  const __m256d omb2v = _mm256_set1_pd(omb2);
  const __m256d c1v = _mm256_set1_pd(c1);
  const __m256d c2v = _mm256_set1_pd(c2);
  const __m256d epsv = _mm256_set1_pd(eps);
  const __m256d nlrv = _mm256_set1_pd(-lr);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_fmadd_pd(b1v, mv, _mm256_mul_pd(omb1v, g));
    vv = _mm256_fmadd_pd(b2v, vv, _mm256_mul_pd(omb2v, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(mv, c1v);
    const __m256d vhat = _mm256_div_pd(vv, c2v);
    const __m256d u =
        _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv));
    _mm256_storeu_pd(param + i,
                     _mm256_fmadd_pd(nlrv, u, _mm256_loadu_pd(param + i)));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = std::fma(beta1, m[i], omb1 * g);
    v[i] = std::fma(beta2, v[i], omb2 * (g * g));
    const double u = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    param[i] = std::fma(-lr, u, param[i]);
  }
}

}  // namespace avx2

extern const Table<float> kAvx2TableF32;
extern const Table<double> kAvx2TableF64;
extern const bool kHaveAvx2Tables;
const Table<float> kAvx2TableF32 = {
    &avx2::matmul_f32, &avx2::add_f32,   &avx2::mul_f32,
    &avx2::axpy_f32,   &avx2::scale_f32, &avx2::adam_update_f32,
};
const Table<double> kAvx2TableF64 = {
    &avx2::matmul_f64, &avx2::add_f64,   &avx2::mul_f64,
    &avx2::axpy_f64,   &avx2::scale_f64, &avx2::adam_update_f64,
};
const bool kHaveAvx2Tables = true;

}  // namespace probelab::kernels

#else  // non-x86: scalar only

namespace probelab::kernels {
extern const Table<float> kAvx2TableF32;
extern const Table<double> kAvx2TableF64;
extern const bool kHaveAvx2Tables;
const Table<float> kAvx2TableF32 = {};
const Table<double> kAvx2TableF64 = {};
const bool kHaveAvx2Tables = false;
}  // namespace probelab::kernels

#endif
