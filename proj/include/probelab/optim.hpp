#pragma once

#include <cstdint>
#include <span>

#include "probelab/tensor.hpp"

namespace probelab {

// Per-parameter Adam moments. Buffers are lazily sized on the first step.
template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  int64_t t = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// One bias-corrected Adam update. Rejects non-finite gradients without
// touching the parameter.
template <typename T>
void adam_step(Tensor<T>& param, std::span<const T> grad, AdamState<T>& state,
               T lr);

enum class LrKind { cosine, constant };

struct LrSchedule {
  double lr0 = 1e-3;
  int64_t total_steps = 1;
  LrKind kind = LrKind::cosine;
};

// lr0 * (1 + cos(pi * step / total_steps)) / 2 for the cosine kind;
// step must lie in [0, total_steps].
double cosine_lr(int64_t step, const LrSchedule& sched);

// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)),
// fan_in = shape.back(), fan_out = shape.front(). Deterministic per seed.
// Rejects 1-D shapes: biases are zero-initialized, not sampled.
template <typename T>
Tensor<T> xavier_uniform(const Shape& shape, uint64_t seed);

extern template void adam_step<float>(Tensor<float>&, std::span<const float>,
                                      AdamState<float>&, float);
extern template void adam_step<double>(Tensor<double>&, std::span<const double>,
                                       AdamState<double>&, double);
extern template Tensor<float> xavier_uniform<float>(const Shape&, uint64_t);
extern template Tensor<double> xavier_uniform<double>(const Shape&, uint64_t);

}  // namespace probelab
