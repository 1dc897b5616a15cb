#include "probelab/optim.hpp"

#include <cmath>

#include "probelab/kernels.hpp"
#include "probelab/rng.hpp"

namespace probelab {

template <typename T>
void adam_step(Tensor<T>& param, std::span<const T> grad, AdamState<T>& state,
               T lr) {
  const size_t n = param.size();
  if (grad.size() != n)
    throw ShapeError("adam_step gradient length " + std::to_string(grad.size()) +
                     " != parameter length " + std::to_string(n));
  if (state.m.empty()) state.m.assign(n, T(0));
  if (state.v.empty()) state.v.assign(n, T(0));
  if (state.m.size() != n || state.v.size() != n)
    throw ShapeError("adam_step state does not match parameter length");
  if (!(lr >= T(0))) throw ContractError("adam_step needs lr >= 0");
  for (T g : grad)
    if (!std::isfinite(g))
      throw NumericError("adam_step: non-finite gradient entry, step aborted");

  state.t += 1;
  const T c1 = T(1) - static_cast<T>(std::pow(static_cast<double>(state.beta1),
                                              static_cast<double>(state.t)));
  const T c2 = T(1) - static_cast<T>(std::pow(static_cast<double>(state.beta2),
                                              static_cast<double>(state.t)));
  kernels::table<T>().adam_update(param.data.data(), grad.data(),
                                  state.m.data(), state.v.data(), n, lr,
                                  state.beta1, state.beta2, state.eps, c1, c2);
}

double cosine_lr(int64_t step, const LrSchedule& sched) {
  if (sched.total_steps <= 0) throw ContractError("schedule needs total_steps > 0");
  if (step < 0 || step > sched.total_steps)
    throw ContractError("schedule step " + std::to_string(step) +
                        " outside [0, " + std::to_string(sched.total_steps) + "]");
  if (sched.kind == LrKind::constant) return sched.lr0;
  const double x = static_cast<double>(step) / static_cast<double>(sched.total_steps);
  return sched.lr0 * (1.0 + std::cos(M_PI * x)) * 0.5;
}

template <typename T>
Tensor<T> xavier_uniform(const Shape& shape, uint64_t seed) {
  if (shape.size() < 2)
    throw ContractError(
        "xavier_uniform needs >= 2 extents (1-D parameters are zero-initialized)");
  const double fan_in = static_cast<double>(shape.back());
  const double fan_out = static_cast<double>(shape.front());
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<T> out(shape);
  Rng rng(seed);
  for (T& w : out.data)
    w = static_cast<T>(a * (2.0 * rng.uniform() - 1.0));
  return out;
}

template void adam_step<float>(Tensor<float>&, std::span<const float>,
                               AdamState<float>&, float);
template void adam_step<double>(Tensor<double>&, std::span<const double>,
                                AdamState<double>&, double);
template Tensor<float> xavier_uniform<float>(const Shape&, uint64_t);
template Tensor<double> xavier_uniform<double>(const Shape&, uint64_t);

}  // namespace probelab
