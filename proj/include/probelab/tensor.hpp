#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "probelab/common.hpp"

namespace probelab {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense n-dimensional value. Row-major; 2-D is the workhorse.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0))
      : shape(std::move(s)), data(shape_numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  size_t size() const { return data.size(); }
  size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 1 : shape[0]) : shape[1]; }

  T& at(size_t i, size_t j) { return data[i * shape[1] + j]; }
  const T& at(size_t i, size_t j) const { return data[i * shape[1] + j]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace probelab
