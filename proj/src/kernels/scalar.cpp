// Reference kernels. These define the numeric semantics every other ISA must
// reproduce bit-for-bit: k-ascending accumulation and fused multiply-add
// rounding (std::fma) wherever the vector kernels use an fma instruction.

#include <cmath>
#include <cstddef>

#include "probelab/kernels.hpp"

namespace probelab::kernels {
namespace scalar {

template <typename T>
void matmul(const T* a, const T* b, T* c, size_t m, size_t k, size_t n,
            bool accumulate) {
  for (size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      T acc = accumulate ? crow[j] : T(0);
      for (size_t kk = 0; kk < k; ++kk) acc = std::fma(arow[kk], b[kk * n + j], acc);
      crow[j] = acc;
    }
  }
}

template <typename T>
void add(const T* a, const T* b, T* c, size_t n) {
  for (size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* c, size_t n) {
  for (size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

template <typename T>
void axpy(T alpha, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

template <typename T>
void scale(T alpha, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, size_t n, T lr, T beta1,
                 T beta2, T eps, T c1, T c2) {
  const T omb1 = T(1) - beta1;
  const T omb2 = T(1) - beta2;
  for (size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    m[i] = std::fma(beta1, m[i], omb1 * g);
    v[i] = std::fma(beta2, v[i], omb2 * (g * g));
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    const T u = mhat / (std::sqrt(vhat) + eps);
    param[i] = std::fma(-lr, u, param[i]);
  }
}

}  // namespace scalar

template <typename T>
static Table<T> make_scalar_table() {
  Table<T> t;
  t.matmul = &scalar::matmul<T>;
  t.add = &scalar::add<T>;
  t.mul = &scalar::mul<T>;
  t.axpy = &scalar::axpy<T>;
  t.scale = &scalar::scale<T>;
  t.adam_update = &scalar::adam_update<T>;
  return t;
}

extern const Table<float> kScalarTableF32;
extern const Table<double> kScalarTableF64;
const Table<float> kScalarTableF32 = make_scalar_table<float>();
const Table<double> kScalarTableF64 = make_scalar_table<double>();

}  // namespace probelab::kernels
