#pragma once

#include <span>
#include <vector>

#include "probelab/tensor.hpp"

namespace probelab {

// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Val {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape over 1-D/2-D tensors. Nodes are recorded in
// construction order (a valid topological order); backward() walks them in
// reverse, accumulating (+=) gradients across fan-out.
//
// A tape built with grad_enabled = false computes identical values but skips
// gradient bookkeeping and large saved activations; values are bit-identical
// between the two modes because both run the same kernels.
template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  size_t node_count() const { return nodes_.size(); }

  // Leaf over external storage. The storage must outlive the tape and stay
  // unmodified until backward() finishes.
  Val leaf(std::span<const T> data, Shape shape, bool requires_grad);
  // Leaf that owns a copy of the given tensor.
  Val constant(Tensor<T> value);

  // c[m x n] = a[m x k] * b[k x n]
  Val matmul(Val a, Val b);
  // Same shape, or row-broadcast bias: a[m x n] + b[n]
  Val add(Val a, Val b);
  // Elementwise product, same shape.
  Val mul(Val a, Val b);
  Val scale(Val a, T c);
  Val transpose(Val a);
  // rows of table indexed by ids -> [ids.size() x d]
  Val embedding(Val table, std::vector<int> ids);
  // Per-row layer normalization with affine parameters gamma/beta of width n.
  Val layernorm(Val x, Val gamma, Val beta);
  Val gelu(Val x);
  // Multi-head causal self-attention. q, k, v are [s x d]; d % heads == 0.
  Val causal_attention(Val q, Val k, Val v, int heads);
  // Mean of per-row cross-entropy -log softmax(logits)[target], weighted by
  // row_weights (all-ones when empty); rows with weight 0 are ignored.
  Val softmax_cross_entropy(Val logits, std::vector<int> targets,
                            std::vector<T> row_weights = {});
  Val sum_all(Val x);
  Val mean_all(Val x);
  Val concat_rows(Val a, Val b);

  // Backpropagate from a scalar loss. Throws ContractError otherwise.
  void backward(Val loss);

  std::span<const T> value(Val v) const;
  const Shape& shape(Val v) const;
  // Gradient of the last backward() w.r.t. node v; empty if none was needed.
  std::span<const T> grad(Val v) const;
  bool requires_grad(Val v) const { return node(v.id).requires_grad; }

 private:
  enum class Op {
    leaf,
    matmul,
    add,
    add_bias,
    mul,
    scale,
    transpose,
    embedding,
    layernorm,
    gelu,
    attention,
    softmax_ce,
    sum_all,
    mean_all,
    concat_rows,
  };

  struct Node {
    Op op = Op::leaf;
    int in0 = -1, in1 = -1, in2 = -1;
    Shape shape;
    std::vector<T> owned;      // interior values (empty for external leaves)
    std::span<const T> data;   // view over owned or external storage
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<T> aux0, aux1;  // op-specific saved activations
    std::vector<int> ids;       // embedding indices / CE targets
    std::vector<T> weights;     // CE row weights
    T scalar0 = T(0);
    int heads = 0;
  };

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int push(Node n);
  Val make(Op op, Shape shape, int in0, int in1 = -1, int in2 = -1);
  std::vector<T>& grad_buf(int id);
  void check(Val v) const;

  void backward_node(int id);

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

// Row-wise softmax of a matrix (no masking); the same numerics the
// cross-entropy and attention ops use internally.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

extern template Tensor<float> softmax_rows<float>(const Tensor<float>&);
extern template Tensor<double> softmax_rows<double>(const Tensor<double>&);

}  // namespace probelab
