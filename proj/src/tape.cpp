#include "probelab/tape.hpp"

#include <cmath>
#include <cstring>

#include "probelab/kernels.hpp"

namespace probelab {

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
T inv_sqrt_of(size_t n) {
  return T(1) / std::sqrt(static_cast<T>(n));
}

// Softmax over row[0..limit] inclusive; entries past limit are zeroed
// (causal mask). Max-shifted for stability.
template <typename T>
void softmax_row(T* row, size_t n, size_t limit) {
  T mx = row[0];
  for (size_t j = 1; j <= limit; ++j) mx = std::max(mx, row[j]);
  T sum = T(0);
  for (size_t j = 0; j <= limit; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const T inv = T(1) / sum;
  for (size_t j = 0; j <= limit; ++j) row[j] *= inv;
  for (size_t j = limit + 1; j < n; ++j) row[j] = T(0);
}

// Copy a column block [c0, c0+w) of src[s x d] into dst[s x w].
template <typename T>
void slice_cols(const T* src, size_t s, size_t d, size_t c0, size_t w, T* dst) {
  for (size_t i = 0; i < s; ++i)
    std::memcpy(dst + i * w, src + i * d + c0, w * sizeof(T));
}

// dst[s x d] column block [c0, c0+w) += src[s x w].
template <typename T>
void scatter_cols_add(const T* src, size_t s, size_t d, size_t c0, size_t w,
                      T* dst) {
  for (size_t i = 0; i < s; ++i)
    for (size_t c = 0; c < w; ++c) dst[i * d + c0 + c] += src[i * w + c];
}

}  // namespace

template <typename T>
int Tape<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
void Tape<T>::check(Val v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError("value handle does not belong to this tape");
}

template <typename T>
Val Tape<T>::make(Op op, Shape shape, int in0, int in1, int in2) {
  Node n;
  n.op = op;
  n.in0 = in0;
  n.in1 = in1;
  n.in2 = in2;
  n.shape = std::move(shape);
  n.owned.resize(shape_numel(n.shape));
  bool rg = false;
  for (int id : {in0, in1, in2})
    if (id >= 0) rg = rg || node(id).requires_grad;
  n.requires_grad = grad_enabled_ && rg;
  int id = push(std::move(n));
  node(id).data = std::span<const T>(node(id).owned);
  return Val{id};
}

template <typename T>
Val Tape<T>::leaf(std::span<const T> data, Shape shape, bool requires_grad) {
  if (data.size() != shape_numel(shape))
    throw ShapeError("leaf data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  Node n;
  n.op = Op::leaf;
  n.shape = std::move(shape);
  n.data = data;
  n.requires_grad = grad_enabled_ && requires_grad;
  return Val{push(std::move(n))};
}

template <typename T>
Val Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = Op::leaf;
  n.shape = value.shape;
  n.owned = std::move(value.data);
  n.requires_grad = false;
  int id = push(std::move(n));
  node(id).data = std::span<const T>(node(id).owned);
  return Val{id};
}

template <typename T>
Val Tape<T>::matmul(Val a, Val b) {
  check(a);
  check(b);
  const Node& na = node(a.id);
  const Node& nb = node(b.id);
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
    throw ShapeError("matmul shapes " + shape_str(na.shape) + " and " +
                     shape_str(nb.shape) + " are incompatible");
  const size_t m = na.shape[0], k = na.shape[1], n = nb.shape[1];
  Val out = make(Op::matmul, {m, n}, a.id, b.id);
  kernels::matmul<T>(node(a.id).data.data(), node(b.id).data.data(),
                     node(out.id).owned.data(), m, k, n, false);
  return out;
}

template <typename T>
Val Tape<T>::add(Val a, Val b) {
  check(a);
  check(b);
  const Node& na = node(a.id);
  const Node& nb = node(b.id);
  const size_t an = na.data.size(), bn = nb.data.size();
  if (na.shape == nb.shape) {
    Val out = make(Op::add, na.shape, a.id, b.id);
    kernels::add<T>(na.data.data(), nb.data.data(), node(out.id).owned.data(), an);
    return out;
  }
  // Row-broadcast bias: [m x n] + [n]
  if (na.shape.size() == 2 && bn == na.shape[1]) {
    const size_t m = na.shape[0], n = na.shape[1];
    Val out = make(Op::add_bias, na.shape, a.id, b.id);
    T* dst = node(out.id).owned.data();
    const T* src = node(a.id).data.data();
    const T* bias = node(b.id).data.data();
    for (size_t i = 0; i < m; ++i)
      kernels::add<T>(src + i * n, bias, dst + i * n, n);
    return out;
  }
  throw ShapeError("add shapes " + shape_str(na.shape) + " and " +
                   shape_str(nb.shape) + " are incompatible");
}

template <typename T>
Val Tape<T>::mul(Val a, Val b) {
  check(a);
  check(b);
  if (node(a.id).shape != node(b.id).shape)
    throw ShapeError("mul shapes " + shape_str(node(a.id).shape) + " and " +
                     shape_str(node(b.id).shape) + " differ");
  Val out = make(Op::mul, node(a.id).shape, a.id, b.id);
  kernels::mul<T>(node(a.id).data.data(), node(b.id).data.data(),
                  node(out.id).owned.data(), node(a.id).data.size());
  return out;
}

template <typename T>
Val Tape<T>::scale(Val a, T c) {
  check(a);
  Val out = make(Op::scale, node(a.id).shape, a.id);
  node(out.id).scalar0 = c;
  kernels::scale<T>(c, node(a.id).data.data(), node(out.id).owned.data(),
                    node(a.id).data.size());
  return out;
}

template <typename T>
Val Tape<T>::transpose(Val a) {
  check(a);
  const Node& na = node(a.id);
  if (na.shape.size() != 2)
    throw ShapeError("transpose expects a matrix, got " + shape_str(na.shape));
  const size_t m = na.shape[0], n = na.shape[1];
  Val out = make(Op::transpose, {n, m}, a.id);
  kernels::transpose<T>(node(a.id).data.data(), node(out.id).owned.data(), m, n);
  return out;
}

template <typename T>
Val Tape<T>::embedding(Val table, std::vector<int> ids) {
  check(table);
  const Node& nt = node(table.id);
  if (nt.shape.size() != 2)
    throw ShapeError("embedding table must be a matrix, got " + shape_str(nt.shape));
  const size_t v = nt.shape[0], d = nt.shape[1];
  for (int id : ids)
    if (id < 0 || static_cast<size_t>(id) >= v)
      throw ContractError("embedding index " + std::to_string(id) +
                          " out of range for table with " + std::to_string(v) +
                          " rows");
  Val out = make(Op::embedding, {ids.size(), d}, table.id);
  T* dst = node(out.id).owned.data();
  const T* src = node(table.id).data.data();
  for (size_t i = 0; i < ids.size(); ++i)
    std::memcpy(dst + i * d, src + static_cast<size_t>(ids[i]) * d, d * sizeof(T));
  node(out.id).ids = std::move(ids);
  return out;
}

template <typename T>
Val Tape<T>::layernorm(Val x, Val gamma, Val beta) {
  check(x);
  check(gamma);
  check(beta);
  const Node& nx = node(x.id);
  if (nx.shape.size() != 2)
    throw ShapeError("layernorm expects a matrix, got " + shape_str(nx.shape));
  const size_t m = nx.shape[0], n = nx.shape[1];
  if (node(gamma.id).data.size() != n || node(beta.id).data.size() != n)
    throw ShapeError("layernorm affine width mismatch for " + shape_str(nx.shape));
  Val out = make(Op::layernorm, nx.shape, x.id, gamma.id, beta.id);
  Node& no = node(out.id);
  const T* src = node(x.id).data.data();
  const T* g = node(gamma.id).data.data();
  const T* b = node(beta.id).data.data();
  const bool save = no.requires_grad;
  if (save) {
    no.aux0.resize(m * n);  // xhat
    no.aux1.resize(m);      // invstd
  }
  std::vector<T> xhat_row(n);
  for (size_t i = 0; i < m; ++i) {
    const T* row = src + i * n;
    T mu = T(0);
    for (size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (size_t j = 0; j < n; ++j) {
      const T dlt = row[j] - mu;
      var += dlt * dlt;
    }
    var /= static_cast<T>(n);
    const T invstd = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
    T* xh = save ? no.aux0.data() + i * n : xhat_row.data();
    for (size_t j = 0; j < n; ++j) xh[j] = (row[j] - mu) * invstd;
    if (save) no.aux1[i] = invstd;
    T* dst = no.owned.data() + i * n;
    for (size_t j = 0; j < n; ++j) dst[j] = xh[j] * g[j] + b[j];
  }
  return out;
}

template <typename T>
Val Tape<T>::gelu(Val x) {
  check(x);
  Val out = make(Op::gelu, node(x.id).shape, x.id);
  const T* src = node(x.id).data.data();
  T* dst = node(out.id).owned.data();
  const size_t n = node(x.id).data.size();
  const T inv_sqrt2 = static_cast<T>(0.7071067811865475244);
  for (size_t i = 0; i < n; ++i)
    dst[i] = T(0.5) * src[i] * (T(1) + std::erf(src[i] * inv_sqrt2));
  return out;
}

template <typename T>
Val Tape<T>::causal_attention(Val q, Val k, Val v, int heads) {
  check(q);
  check(k);
  check(v);
  const Node& nq = node(q.id);
  if (nq.shape.size() != 2 || node(k.id).shape != nq.shape ||
      node(v.id).shape != nq.shape)
    throw ShapeError("attention expects matching [s x d] inputs, got " +
                     shape_str(nq.shape) + ", " + shape_str(node(k.id).shape) +
                     ", " + shape_str(node(v.id).shape));
  const size_t s = nq.shape[0], d = nq.shape[1];
  if (heads <= 0 || d % static_cast<size_t>(heads) != 0)
    throw ShapeError("attention width " + std::to_string(d) +
                     " not divisible by " + std::to_string(heads) + " heads");
  const size_t h = static_cast<size_t>(heads);
  const size_t dh = d / h;
  const T inv = inv_sqrt_of<T>(dh);

  Val out = make(Op::attention, nq.shape, q.id, k.id, v.id);
  Node& no = node(out.id);
  no.heads = heads;
  no.scalar0 = inv;
  const bool save = no.requires_grad;
  if (save) no.aux0.resize(h * s * s);  // softmax probabilities per head

  std::vector<T> qh(s * dh), kh(s * dh), vh(s * dh), kt(dh * s), oh(s * dh);
  std::vector<T> scores_local;
  if (!save) scores_local.resize(s * s);
  const T* qd = node(q.id).data.data();
  const T* kd = node(k.id).data.data();
  const T* vd = node(v.id).data.data();
  for (size_t hi = 0; hi < h; ++hi) {
    const size_t c0 = hi * dh;
    slice_cols(qd, s, d, c0, dh, qh.data());
    slice_cols(kd, s, d, c0, dh, kh.data());
    slice_cols(vd, s, d, c0, dh, vh.data());
    kernels::transpose<T>(kh.data(), kt.data(), s, dh);
    T* scores = save ? no.aux0.data() + hi * s * s : scores_local.data();
    kernels::matmul<T>(qh.data(), kt.data(), scores, s, dh, s, false);
    kernels::scale<T>(inv, scores, scores, s * s);
    for (size_t i = 0; i < s; ++i) softmax_row(scores + i * s, s, i);
    kernels::matmul<T>(scores, vh.data(), oh.data(), s, s, dh, false);
    scatter_cols_add(oh.data(), s, d, c0, dh,
                     no.owned.data());  // owned starts zeroed
  }
  return out;
}

template <typename T>
Val Tape<T>::softmax_cross_entropy(Val logits, std::vector<int> targets,
                                   std::vector<T> row_weights) {
  check(logits);
  const Node& nl = node(logits.id);
  if (nl.shape.size() != 2)
    throw ShapeError("cross-entropy expects [m x n] logits, got " +
                     shape_str(nl.shape));
  const size_t m = nl.shape[0], n = nl.shape[1];
  if (targets.size() != m)
    throw ShapeError("cross-entropy targets length " +
                     std::to_string(targets.size()) + " != rows " +
                     std::to_string(m));
  if (row_weights.empty()) row_weights.assign(m, T(1));
  if (row_weights.size() != m)
    throw ShapeError("cross-entropy weights length mismatch");
  for (size_t i = 0; i < m; ++i)
    if (row_weights[i] != T(0) &&
        (targets[i] < 0 || static_cast<size_t>(targets[i]) >= n))
      throw ContractError("cross-entropy target out of range");
  T wsum = T(0);
  for (T w : row_weights) wsum += w;
  if (!(wsum > T(0))) throw ContractError("cross-entropy needs positive total weight");

  Val out = make(Op::softmax_ce, {1}, logits.id);
  Node& no = node(out.id);
  const bool save = no.requires_grad;
  if (save) no.aux0.resize(m * n);  // probabilities
  const T* src = node(logits.id).data.data();
  std::vector<T> prow(n);
  T loss = T(0);
  for (size_t i = 0; i < m; ++i) {
    if (row_weights[i] == T(0) && !save) continue;
    const T* row = src + i * n;
    T mx = row[0];
    for (size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    T* p = save ? no.aux0.data() + i * n : prow.data();
    for (size_t j = 0; j < n; ++j) {
      p[j] = std::exp(row[j] - mx);
      sum += p[j];
    }
    const T invsum = T(1) / sum;
    for (size_t j = 0; j < n; ++j) p[j] *= invsum;
    if (row_weights[i] != T(0)) {
      const T logz = std::log(sum) + mx;
      loss += row_weights[i] * (logz - row[static_cast<size_t>(targets[i])]);
    }
  }
  no.owned[0] = loss / wsum;
  no.ids = std::move(targets);
  no.weights = std::move(row_weights);
  no.scalar0 = wsum;
  return out;
}

template <typename T>
Val Tape<T>::sum_all(Val x) {
  check(x);
  Val out = make(Op::sum_all, {1}, x.id);
  T acc = T(0);
  for (T v : node(x.id).data) acc += v;
  node(out.id).owned[0] = acc;
  return out;
}

template <typename T>
Val Tape<T>::mean_all(Val x) {
  check(x);
  Val out = make(Op::mean_all, {1}, x.id);
  T acc = T(0);
  for (T v : node(x.id).data) acc += v;
  node(out.id).owned[0] = acc / static_cast<T>(node(x.id).data.size());
  return out;
}

template <typename T>
Val Tape<T>::concat_rows(Val a, Val b) {
  check(a);
  check(b);
  const Node& na = node(a.id);
  const Node& nb = node(b.id);
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[1])
    throw ShapeError("concat_rows shapes " + shape_str(na.shape) + " and " +
                     shape_str(nb.shape) + " are incompatible");
  const size_t n = na.shape[1];
  Val out = make(Op::concat_rows, {na.shape[0] + nb.shape[0], n}, a.id, b.id);
  T* dst = node(out.id).owned.data();
  std::memcpy(dst, node(a.id).data.data(), node(a.id).data.size() * sizeof(T));
  std::memcpy(dst + node(a.id).data.size(), node(b.id).data.data(),
              node(b.id).data.size() * sizeof(T));
  return out;
}

template <typename T>
std::vector<T>& Tape<T>::grad_buf(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.data.size(), T(0));
  return n.grad;
}

template <typename T>
std::span<const T> Tape<T>::value(Val v) const {
  check(v);
  return node(v.id).data;
}

template <typename T>
const Shape& Tape<T>::shape(Val v) const {
  check(v);
  return node(v.id).shape;
}

template <typename T>
std::span<const T> Tape<T>::grad(Val v) const {
  check(v);
  return std::span<const T>(node(v.id).grad);
}

template <typename T>
void Tape<T>::backward(Val loss) {
  check(loss);
  if (!grad_enabled_)
    throw ContractError("backward on a tape built without gradients");
  if (node(loss.id).data.size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(node(loss.id).shape));
  for (Node& n : nodes_) n.grad.clear();
  grad_buf(loss.id)[0] = T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.empty() || n.op == Op::leaf) continue;
    backward_node(id);
  }
}

template <typename T>
void Tape<T>::backward_node(int id) {
  Node& n = node(id);
  const T* g = n.grad.data();
  auto needs = [&](int in) { return in >= 0 && node(in).requires_grad; };

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::matmul: {
      const Node& a = node(n.in0);
      const Node& b = node(n.in1);
      const size_t m = a.shape[0], k = a.shape[1], nn = b.shape[1];
      if (needs(n.in0)) {
        std::vector<T> bt(nn * k);
        kernels::transpose<T>(b.data.data(), bt.data(), k, nn);
        kernels::matmul<T>(g, bt.data(), grad_buf(n.in0).data(), m, nn, k, true);
      }
      if (needs(n.in1)) {
        std::vector<T> at(k * m);
        kernels::transpose<T>(a.data.data(), at.data(), m, k);
        kernels::matmul<T>(at.data(), g, grad_buf(n.in1).data(), k, m, nn, true);
      }
      break;
    }
    case Op::add: {
      const size_t sz = n.data.size();
      if (needs(n.in0)) kernels::axpy<T>(T(1), g, grad_buf(n.in0).data(), sz);
      if (needs(n.in1)) kernels::axpy<T>(T(1), g, grad_buf(n.in1).data(), sz);
      break;
    }
    case Op::add_bias: {
      const size_t m = n.shape[0], nn = n.shape[1];
      if (needs(n.in0)) kernels::axpy<T>(T(1), g, grad_buf(n.in0).data(), m * nn);
      if (needs(n.in1)) {
        T* db = grad_buf(n.in1).data();
        for (size_t i = 0; i < m; ++i)
          kernels::axpy<T>(T(1), g + i * nn, db, nn);
      }
      break;
    }
    case Op::mul: {
      const size_t sz = n.data.size();
      std::vector<T> tmp(sz);
      if (needs(n.in0)) {
        kernels::mul<T>(g, node(n.in1).data.data(), tmp.data(), sz);
        kernels::add<T>(grad_buf(n.in0).data(), tmp.data(), grad_buf(n.in0).data(), sz);
      }
      if (needs(n.in1)) {
        kernels::mul<T>(g, node(n.in0).data.data(), tmp.data(), sz);
        kernels::add<T>(grad_buf(n.in1).data(), tmp.data(), grad_buf(n.in1).data(), sz);
      }
      break;
    }
    case Op::scale:
      if (needs(n.in0))
        kernels::axpy<T>(n.scalar0, g, grad_buf(n.in0).data(), n.data.size());
      break;
    case Op::transpose: {
      if (needs(n.in0)) {
        const size_t m = n.shape[0], nn = n.shape[1];  // shape of the output
        std::vector<T> tmp(m * nn);
        kernels::transpose<T>(g, tmp.data(), m, nn);
        kernels::add<T>(grad_buf(n.in0).data(), tmp.data(), grad_buf(n.in0).data(),
                        m * nn);
      }
      break;
    }
    case Op::embedding: {
      if (needs(n.in0)) {
        const size_t d = n.shape[1];
        T* dt = grad_buf(n.in0).data();
        for (size_t i = 0; i < n.ids.size(); ++i)
          kernels::axpy<T>(T(1), g + i * d,
                           dt + static_cast<size_t>(n.ids[i]) * d, d);
      }
      break;
    }
    case Op::layernorm: {
      const size_t m = n.shape[0], nn = n.shape[1];
      const T* gamma = node(n.in1).data.data();
      const T* xhat = n.aux0.data();
      T* dx = needs(n.in0) ? grad_buf(n.in0).data() : nullptr;
      T* dgamma = needs(n.in1) ? grad_buf(n.in1).data() : nullptr;
      T* dbeta = needs(n.in2) ? grad_buf(n.in2).data() : nullptr;
      std::vector<T> dxhat(nn);
      for (size_t i = 0; i < m; ++i) {
        const T* gy = g + i * nn;
        const T* xh = xhat + i * nn;
        if (dgamma)
          for (size_t j = 0; j < nn; ++j) dgamma[j] += gy[j] * xh[j];
        if (dbeta)
          for (size_t j = 0; j < nn; ++j) dbeta[j] += gy[j];
        if (dx) {
          T m1 = T(0), m2 = T(0);
          for (size_t j = 0; j < nn; ++j) {
            dxhat[j] = gy[j] * gamma[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
          }
          m1 /= static_cast<T>(nn);
          m2 /= static_cast<T>(nn);
          const T invstd = n.aux1[i];
          T* dxi = dx + i * nn;
          for (size_t j = 0; j < nn; ++j)
            dxi[j] += invstd * (dxhat[j] - m1 - xh[j] * m2);
        }
      }
      break;
    }
    case Op::gelu: {
      if (needs(n.in0)) {
        const T* x = node(n.in0).data.data();
        T* dx = grad_buf(n.in0).data();
        const size_t sz = n.data.size();
        const T inv_sqrt2 = static_cast<T>(0.7071067811865475244);
        const T inv_sqrt2pi = static_cast<T>(0.3989422804014326779);
        for (size_t i = 0; i < sz; ++i) {
          const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
          const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
          dx[i] += g[i] * (cdf + x[i] * pdf);
        }
      }
      break;
    }
    case Op::attention: {
      const size_t s = n.shape[0], d = n.shape[1];
      const size_t h = static_cast<size_t>(n.heads);
      const size_t dh = d / h;
      const T inv = n.scalar0;
      const T* qd = node(n.in0).data.data();
      const T* kd = node(n.in1).data.data();
      const T* vd = node(n.in2).data.data();
      T* dq = needs(n.in0) ? grad_buf(n.in0).data() : nullptr;
      T* dk = needs(n.in1) ? grad_buf(n.in1).data() : nullptr;
      T* dv = needs(n.in2) ? grad_buf(n.in2).data() : nullptr;
      std::vector<T> qh(s * dh), kh(s * dh), vh(s * dh), doh(s * dh);
      std::vector<T> vt(dh * s), pt(s * s), dp(s * s), ds(s * s);
      std::vector<T> dqh(s * dh), dkh(s * dh), dvh(s * dh), dst_t(s * s);
      for (size_t hi = 0; hi < h; ++hi) {
        const size_t c0 = hi * dh;
        const T* p = n.aux0.data() + hi * s * s;
        slice_cols(qd, s, d, c0, dh, qh.data());
        slice_cols(kd, s, d, c0, dh, kh.data());
        slice_cols(vd, s, d, c0, dh, vh.data());
        slice_cols(g, s, d, c0, dh, doh.data());
        // dP = dO * V^T ; dV = P^T * dO
        kernels::transpose<T>(vh.data(), vt.data(), s, dh);
        kernels::matmul<T>(doh.data(), vt.data(), dp.data(), s, dh, s, false);
        if (dv) {
          kernels::transpose<T>(p, pt.data(), s, s);
          kernels::matmul<T>(pt.data(), doh.data(), dvh.data(), s, s, dh, false);
          scatter_cols_add(dvh.data(), s, d, c0, dh, dv);
        }
        // dS = P .* (dP - rowsum(dP .* P))
        for (size_t i = 0; i < s; ++i) {
          const T* pi = p + i * s;
          const T* dpi = dp.data() + i * s;
          T r = T(0);
          for (size_t j = 0; j <= i; ++j) r += dpi[j] * pi[j];
          T* dsi = ds.data() + i * s;
          for (size_t j = 0; j <= i; ++j) dsi[j] = pi[j] * (dpi[j] - r);
          for (size_t j = i + 1; j < s; ++j) dsi[j] = T(0);
        }
        if (dq) {
          kernels::matmul<T>(ds.data(), kh.data(), dqh.data(), s, s, dh, false);
          kernels::scale<T>(inv, dqh.data(), dqh.data(), s * dh);
          scatter_cols_add(dqh.data(), s, d, c0, dh, dq);
        }
        if (dk) {
          kernels::transpose<T>(ds.data(), dst_t.data(), s, s);
          kernels::matmul<T>(dst_t.data(), qh.data(), dkh.data(), s, s, dh, false);
          kernels::scale<T>(inv, dkh.data(), dkh.data(), s * dh);
          scatter_cols_add(dkh.data(), s, d, c0, dh, dk);
        }
      }
      break;
    }
    case Op::softmax_ce: {
      if (needs(n.in0)) {
        const Node& nl = node(n.in0);
        const size_t m = nl.shape[0], nn = nl.shape[1];
        const T gl = n.grad[0];
        const T invw = T(1) / n.scalar0;
        T* dl = grad_buf(n.in0).data();
        for (size_t i = 0; i < m; ++i) {
          const T w = n.weights[i];
          if (w == T(0)) continue;
          const T c = gl * w * invw;
          const T* p = n.aux0.data() + i * nn;
          T* d = dl + i * nn;
          for (size_t j = 0; j < nn; ++j) d[j] += c * p[j];
          d[static_cast<size_t>(n.ids[i])] -= c;
        }
      }
      break;
    }
    case Op::sum_all: {
      if (needs(n.in0)) {
        const T gl = n.grad[0];
        T* dx = grad_buf(n.in0).data();
        const size_t sz = node(n.in0).data.size();
        for (size_t i = 0; i < sz; ++i) dx[i] += gl;
      }
      break;
    }
    case Op::mean_all: {
      if (needs(n.in0)) {
        const size_t sz = node(n.in0).data.size();
        const T gl = n.grad[0] / static_cast<T>(sz);
        T* dx = grad_buf(n.in0).data();
        for (size_t i = 0; i < sz; ++i) dx[i] += gl;
      }
      break;
    }
    case Op::concat_rows: {
      const size_t asz = node(n.in0).data.size();
      const size_t bsz = node(n.in1).data.size();
      if (needs(n.in0)) kernels::axpy<T>(T(1), g, grad_buf(n.in0).data(), asz);
      if (needs(n.in1))
        kernels::axpy<T>(T(1), g + asz, grad_buf(n.in1).data(), bsz);
      break;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.shape.size() != 2)
    throw ShapeError("softmax_rows expects a matrix, got " + shape_str(x.shape));
  Tensor<T> out = x;
  const size_t m = x.rows(), n = x.cols();
  for (size_t i = 0; i < m; ++i)
    softmax_row(out.data.data() + i * n, n, n - 1);
  return out;
}

template Tensor<float> softmax_rows<float>(const Tensor<float>&);
template Tensor<double> softmax_rows<double>(const Tensor<double>&);

}  // namespace probelab
