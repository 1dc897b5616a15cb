#pragma once

#include <cstddef>

namespace probelab::kernels {

// Instruction sets the dispatcher can select at runtime. The scalar kernels
// are the reference semantics; vector variants must produce bit-identical
// results (each lane performs the same operation sequence as the scalar
// loop, fused multiply-add rounding included).
enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);
bool avx2_supported();

// Active ISA resolution order: explicit set_isa() > PROBELAB_KERNELS env
// variable ("scalar"/"avx2") > best supported.
Isa active_isa();
void set_isa(Isa isa);

template <typename T>
struct Table {
  // c[m x n] = a[m x k] * b[k x n], k-ascending fma accumulation per cell;
  // when accumulate is set the existing c cell seeds the accumulator.
  void (*matmul)(const T* a, const T* b, T* c, size_t m, size_t k, size_t n,
                 bool accumulate);
  // c = a + b, elementwise over n values.
  void (*add)(const T* a, const T* b, T* c, size_t n);
  // c = a * b, elementwise.
  void (*mul)(const T* a, const T* b, T* c, size_t n);
  // y = fma(alpha, x, y), elementwise.
  void (*axpy)(T alpha, const T* x, T* y, size_t n);
  // y = alpha * x, elementwise.
  void (*scale)(T alpha, const T* x, T* y, size_t n);
  // Fused Adam update. c1 = 1 - beta1^t and c2 = 1 - beta2^t are the bias
  // corrections, precomputed by the caller.
  void (*adam_update)(T* param, const T* grad, T* m, T* v, size_t n, T lr,
                      T beta1, T beta2, T eps, T c1, T c2);
};

template <typename T>
const Table<T>& table_for(Isa isa);

// Table for the active ISA.
template <typename T>
inline const Table<T>& table() {
  return table_for<T>(active_isa());
}

// out[n x m] = a[m x n] transposed. Pure data movement, single implementation.
template <typename T>
void transpose(const T* a, T* out, size_t m, size_t n) {
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
}

template <typename T>
inline void matmul(const T* a, const T* b, T* c, size_t m, size_t k, size_t n,
                   bool accumulate = false) {
  table<T>().matmul(a, b, c, m, k, n, accumulate);
}

template <typename T>
inline void add(const T* a, const T* b, T* c, size_t n) {
  table<T>().add(a, b, c, n);
}

template <typename T>
inline void mul(const T* a, const T* b, T* c, size_t n) {
  table<T>().mul(a, b, c, n);
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, size_t n) {
  table<T>().axpy(alpha, x, y, n);
}

template <typename T>
inline void scale(T alpha, const T* x, T* y, size_t n) {
  table<T>().scale(alpha, x, y, n);
}

}  // namespace probelab::kernels
