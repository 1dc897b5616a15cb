#pragma once

#include "probelab/rng.hpp"
#include "support/fd_check.hpp"

namespace probelab::testing {

template <typename T>
Tensor<T> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.data) v = static_cast<T>(rng.uniform(-scale, scale));
  return t;
}

// Rotates through composite graph families (attention included) with
// randomized small dimensions. Family index = seed % 5.
template <typename T>
FdProblem<T> make_random_graph(uint64_t seed) {
  Rng rng(derive_seed(seed, "graph"));
  const int family = static_cast<int>(seed % 5);
  FdProblem<T> p;
  switch (family) {
    case 0: {  // layernorm -> linear -> softmax cross-entropy
      const size_t m = 2 + rng.uniform_int(3);
      const size_t n = 4 + rng.uniform_int(5);
      const size_t classes = 2 + rng.uniform_int(3);
      p.inputs.push_back(random_tensor<T>(rng, {m, n}));
      p.inputs.push_back(random_tensor<T>(rng, {n}, 0.5));  // gamma
      p.inputs.push_back(random_tensor<T>(rng, {n}, 0.5));  // beta
      p.inputs.push_back(random_tensor<T>(rng, {classes, n}));
      p.inputs.push_back(random_tensor<T>(rng, {classes}, 0.2));
      std::vector<int> targets(m);
      for (int& t : targets) t = static_cast<int>(rng.uniform_int(classes));
      p.build = [targets](Tape<T>& tape, const std::vector<Val>& v) {
        Val xn = tape.layernorm(v[0], v[1], v[2]);
        Val logits = tape.add(tape.matmul(xn, tape.transpose(v[3])), v[4]);
        return tape.softmax_cross_entropy(logits, targets);
      };
      break;
    }
    case 1: {  // full attention block with projections and residual
      const int heads = 2;
      const size_t s = 3 + rng.uniform_int(3);
      const size_t d = 4 + 2 * rng.uniform_int(3);
      p.inputs.push_back(random_tensor<T>(rng, {s, d}));
      for (int i = 0; i < 4; ++i)
        p.inputs.push_back(random_tensor<T>(rng, {d, d}, 0.7));
      p.build = [heads](Tape<T>& tape, const std::vector<Val>& v) {
        Val q = tape.matmul(v[0], tape.transpose(v[1]));
        Val k = tape.matmul(v[0], tape.transpose(v[2]));
        Val vv = tape.matmul(v[0], tape.transpose(v[3]));
        Val att = tape.causal_attention(q, k, vv, heads);
        Val out = tape.add(tape.matmul(att, tape.transpose(v[4])), v[0]);
        return tape.mean_all(out);
      };
      break;
    }
    case 2: {  // gelu MLP
      const size_t m = 2 + rng.uniform_int(3);
      const size_t d = 3 + rng.uniform_int(4);
      const size_t hdim = 2 * d;
      p.inputs.push_back(random_tensor<T>(rng, {m, d}));
      p.inputs.push_back(random_tensor<T>(rng, {hdim, d}));
      p.inputs.push_back(random_tensor<T>(rng, {hdim}, 0.3));
      p.inputs.push_back(random_tensor<T>(rng, {d, hdim}));
      p.build = [](Tape<T>& tape, const std::vector<Val>& v) {
        Val h = tape.gelu(tape.add(tape.matmul(v[0], tape.transpose(v[1])), v[2]));
        Val out = tape.matmul(h, tape.transpose(v[3]));
        return tape.mean_all(out);
      };
      break;
    }
    case 3: {  // elementwise mix, transpose, matmul
      const size_t m = 2 + rng.uniform_int(3);
      const size_t n = 3 + rng.uniform_int(3);
      p.inputs.push_back(random_tensor<T>(rng, {m, n}));
      p.inputs.push_back(random_tensor<T>(rng, {m, n}));
      p.inputs.push_back(random_tensor<T>(rng, {m, n}));
      const T c = static_cast<T>(rng.uniform(0.3, 1.5));
      p.build = [c](Tape<T>& tape, const std::vector<Val>& v) {
        Val mixed = tape.add(tape.mul(v[0], v[1]), tape.scale(v[2], c));
        Val sq = tape.matmul(mixed, tape.transpose(mixed));
        return tape.sum_all(sq);
      };
      break;
    }
    default: {  // embedding -> layernorm -> linear -> cross-entropy
      const size_t vocab = 5 + rng.uniform_int(4);
      const size_t d = 4 + rng.uniform_int(4);
      const size_t s = 3 + rng.uniform_int(3);
      const size_t classes = 3;
      p.inputs.push_back(random_tensor<T>(rng, {vocab, d}));
      p.inputs.push_back(random_tensor<T>(rng, {d}, 0.5));
      p.inputs.push_back(random_tensor<T>(rng, {d}, 0.5));
      p.inputs.push_back(random_tensor<T>(rng, {classes, d}));
      std::vector<int> ids(s), targets(s);
      for (int& i : ids) i = static_cast<int>(rng.uniform_int(vocab));
      for (int& t : targets) t = static_cast<int>(rng.uniform_int(classes));
      p.build = [ids, targets](Tape<T>& tape, const std::vector<Val>& v) {
        Val x = tape.embedding(v[0], ids);
        Val xn = tape.layernorm(x, v[1], v[2]);
        Val logits = tape.matmul(xn, tape.transpose(v[3]));
        return tape.softmax_cross_entropy(logits, targets);
      };
      break;
    }
  }
  return p;
}

}  // namespace probelab::testing
