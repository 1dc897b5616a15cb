#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "probelab/tape.hpp"

namespace probelab::testing {

// Gradient-check problem: leaf tensors plus a graph builder that returns a
// scalar loss. The builder must be a pure function of the leaf values so the
// finite-difference oracle can re-evaluate it.
template <typename T>
struct FdProblem {
  std::vector<Tensor<T>> inputs;
  std::function<Val(Tape<T>&, const std::vector<Val>&)> build;
};

template <typename T>
double eval_loss(const FdProblem<T>& prob) {
  Tape<T> tape(false);
  std::vector<Val> leaves;
  leaves.reserve(prob.inputs.size());
  for (const auto& t : prob.inputs)
    leaves.push_back(tape.leaf(std::span<const T>(t.data), t.shape, false));
  const Val loss = prob.build(tape, leaves);
  return static_cast<double>(tape.value(loss)[0]);
}

// Max over parameters of |analytic - central_difference| / max(1, |a|, |fd|).
template <typename T>
double fd_max_error(FdProblem<T>& prob, double h) {
  std::vector<std::vector<T>> analytic;
  {
    Tape<T> tape(true);
    std::vector<Val> leaves;
    for (const auto& t : prob.inputs)
      leaves.push_back(tape.leaf(std::span<const T>(t.data), t.shape, true));
    const Val loss = prob.build(tape, leaves);
    tape.backward(loss);
    for (const Val v : leaves) {
      const auto g = tape.grad(v);
      analytic.emplace_back(g.begin(), g.end());
    }
  }
  double worst = 0.0;
  for (size_t ti = 0; ti < prob.inputs.size(); ++ti) {
    auto& tensor = prob.inputs[ti];
    for (size_t i = 0; i < tensor.size(); ++i) {
      const T saved = tensor.data[i];
      tensor.data[i] = saved + static_cast<T>(h);
      const double fp = eval_loss(prob);
      tensor.data[i] = saved - static_cast<T>(h);
      const double fm = eval_loss(prob);
      tensor.data[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[ti].empty() ? 0.0 : static_cast<double>(analytic[ti][i]);
      const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace probelab::testing
