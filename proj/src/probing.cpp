#include "probelab/probing.hpp"

#include <sstream>

#include "probelab/io.hpp"
#include "probelab/parallel.hpp"
#include "probelab/tape.hpp"

namespace probelab {

const char* token_type_name(TokenType t) {
  switch (t) {
    case TokenType::image_token: return "image";
    case TokenType::text_token: return "text";
    case TokenType::all_token: return "all";
    case TokenType::last_token: return "last";
  }
  return "unknown";
}

TokenType token_type_from(const std::string& name) {
  for (TokenType t : token_types())
    if (name == token_type_name(t)) return t;
  throw ConfigError("unknown token type '" + name + "'");
}

template <typename T>
std::vector<T> pool_hidden(const HiddenStateCache<T>& cache,
                           const SequenceLayout& layout, size_t layer,
                           TokenType ttype) {
  if (layer >= cache.layers.size())
    throw ContractError("layer " + std::to_string(layer) + " out of range (" +
                        std::to_string(cache.layers.size()) + " layers cached)");
  const Tensor<T>& h = cache.layers[layer];
  const size_t d = h.cols();
  std::vector<T> out(d, T(0));
  auto mean_span = [&](size_t b, size_t e) {
    if (e <= b) throw ContractError("empty token span in pooling");
    for (size_t i = b; i < e; ++i)
      for (size_t j = 0; j < d; ++j) out[j] += h.at(i, j);
    const T inv = T(1) / static_cast<T>(e - b);
    for (size_t j = 0; j < d; ++j) out[j] *= inv;
  };
  switch (ttype) {
    case TokenType::image_token:
      mean_span(layout.image_begin, layout.image_end);
      break;
    case TokenType::text_token:
      mean_span(layout.text_begin, layout.text_end);
      break;
    case TokenType::all_token: {
      // image_span and text_span are adjacent by construction.
      if (layout.image_end != layout.text_begin)
        throw ContractError("non-adjacent spans in all-token pooling");
      mean_span(layout.image_begin, layout.text_end);
      break;
    }
    case TokenType::last_token: {
      if (layout.last_index >= h.rows())
        throw ContractError("last_index outside cached states");
      for (size_t j = 0; j < d; ++j) out[j] = h.at(layout.last_index, j);
      break;
    }
  }
  return out;
}

template <typename T>
ProbeClassifier<T> train_probe(const Tensor<T>& features,
                               const std::vector<int>& labels, uint64_t seed,
                               const ProbeTrainConfig& cfg) {
  const size_t n = features.rows();
  const size_t d = features.cols();
  if (n < 2 || labels.size() != n)
    throw ShapeError("train_probe needs matching features/labels with n >= 2");
  for (int y : labels)
    if (y != 0 && y != 1) throw ContractError("probe labels must be 0/1");

  ProbeClassifier<T> clf;
  clf.w = xavier_uniform<T>({2, d}, derive_seed(seed, "probe-w"));
  clf.b = Tensor<T>({2});

  const size_t batches_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const int64_t total_steps = static_cast<int64_t>(batches_per_epoch * cfg.epochs);
  LrSchedule sched{cfg.lr, total_steps, cfg.schedule};
  AdamState<T> st_w, st_b;
  Rng order_rng(derive_seed(seed, "probe-order"));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  int64_t step = 0;
  std::vector<T> xbatch;
  std::vector<int> ybatch;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (size_t b0 = 0; b0 < n; b0 += cfg.batch) {
      const size_t bsz = std::min(cfg.batch, n - b0);
      xbatch.resize(bsz * d);
      ybatch.resize(bsz);
      for (size_t i = 0; i < bsz; ++i) {
        const size_t src = order[b0 + i];
        std::copy_n(features.data.data() + src * d, d, xbatch.data() + i * d);
        ybatch[i] = labels[src];
      }
      Tape<T> tape(true);
      Val w = tape.leaf(std::span<const T>(clf.w.data), clf.w.shape, true);
      Val bb = tape.leaf(std::span<const T>(clf.b.data), clf.b.shape, true);
      Val x = tape.leaf(std::span<const T>(xbatch), {bsz, d}, false);
      Val logits = tape.add(tape.matmul(x, tape.transpose(w)), bb);
      Val loss = tape.softmax_cross_entropy(logits, ybatch);
      tape.backward(loss);
      const T lr = static_cast<T>(cosine_lr(step, sched));
      adam_step<T>(clf.w, tape.grad(w), st_w, lr);
      adam_step<T>(clf.b, tape.grad(bb), st_b, lr);
      ++step;
    }
  }
  return clf;
}

template <typename T>
double probe_accuracy(const ProbeClassifier<T>& clf, const Tensor<T>& features,
                      const std::vector<int>& labels) {
  const size_t n = features.rows();
  const size_t d = features.cols();
  if (n == 0) throw ContractError("probe_accuracy needs a non-empty evaluation set");
  if (labels.size() != n || clf.input_dim() != d)
    throw ShapeError("probe_accuracy shape mismatch");
  size_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    const T* x = features.data.data() + i * d;
    T z0 = clf.b.data[0], z1 = clf.b.data[1];
    for (size_t j = 0; j < d; ++j) {
      z0 += clf.w.data[j] * x[j];
      z1 += clf.w.data[d + j] * x[j];
    }
    const int pred = z1 > z0 ? 1 : 0;  // tie -> class 0
    correct += static_cast<size_t>(pred == labels[i]);
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

template <typename T>
FeatureBank<T> extract_features(const Model<T>& model, const Dataset& ds,
                                const Tokenizer& tok, int workers) {
  const size_t n = ds.size();
  const size_t layers = model.config().n_layers;
  const size_t d = model.config().d_model;
  FeatureBank<T> bank;
  bank.n_layers = layers;
  bank.d = d;
  bank.n = n;
  bank.features.resize(layers * 4);
  for (auto& f : bank.features) f = Tensor<T>({n, d});
  bank.labels.resize(n);
  parallel_for(n, workers, [&](size_t i) {
    const TaskSample& s = ds.samples[i];
    const auto io = model.forward(tok.encode(s.question), s.image, true);
    for (size_t l = 0; l < layers; ++l) {
      for (TokenType t : token_types()) {
        const std::vector<T> pooled = pool_hidden<T>(io.cache, io.layout, l, t);
        std::copy_n(pooled.data(), d,
                    bank.features[l * 4 + static_cast<size_t>(t)].data.data() + i * d);
      }
    }
    bank.labels[i] = s.label;
  });
  return bank;
}

template <typename T>
LayerAccuracyCurve probe_sweep(const Model<T>& model, const Dataset& train_ds,
                               const Dataset& test_ds, const Tokenizer& tok,
                               uint64_t seed, const ProbeTrainConfig& cfg,
                               int workers) {
  if (train_ds.kind != test_ds.kind)
    throw ContractError("probe_sweep needs train/test of the same task kind");
  const FeatureBank<T> train = extract_features(model, train_ds, tok, workers);
  const FeatureBank<T> test = extract_features(model, test_ds, tok, workers);

  LayerAccuracyCurve curve;
  curve.n_layers = train.n_layers;
  curve.acc.assign(train.n_layers * 4, 0.0);
  curve.task = train_ds.kind;
  curve.seed = seed;
  curve.n_test = test.n;
  parallel_for(train.n_layers * 4, workers, [&](size_t cell) {
    const size_t layer = cell / 4;
    const TokenType t = static_cast<TokenType>(cell % 4);
    const ProbeClassifier<T> clf = train_probe<T>(
        train.of(layer, t), train.labels, derive_seed(seed, "probe-cell", cell), cfg);
    curve.acc[cell] = probe_accuracy<T>(clf, test.of(layer, t), test.labels);
  });
  return curve;
}

std::string curve_to_csv(const LayerAccuracyCurve& curve) {
  std::string out = "layer,token_type,accuracy,n_test,task,seed\n";
  for (size_t l = 0; l < curve.n_layers; ++l) {
    for (TokenType t : token_types()) {
      out += std::to_string(l);
      out += ',';
      out += token_type_name(t);
      out += ',';
      out += fmt_fixed(curve.at(l, t), 6);
      out += ',';
      out += std::to_string(curve.n_test);
      out += ',';
      out += task_kind_name(curve.task);
      out += ',';
      out += std::to_string(curve.seed);
      out += '\n';
    }
  }
  return out;
}

LayerAccuracyCurve curve_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "layer,token_type,accuracy,n_test,task,seed")
    throw IoError("bad curve CSV header");
  LayerAccuracyCurve curve;
  std::vector<double> acc;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string layer_s, type_s, acc_s, ntest_s, task_s, seed_s;
    if (!std::getline(ls, layer_s, ',') || !std::getline(ls, type_s, ',') ||
        !std::getline(ls, acc_s, ',') || !std::getline(ls, ntest_s, ',') ||
        !std::getline(ls, task_s, ',') || !std::getline(ls, seed_s, ','))
      throw IoError("bad curve CSV row");
    acc.push_back(std::stod(acc_s));
    curve.n_test = static_cast<size_t>(std::stoull(ntest_s));
    curve.task = task_kind_from(task_s);
    curve.seed = std::stoull(seed_s);
  }
  if (acc.empty() || acc.size() % 4 != 0) throw IoError("curve CSV has no full rows");
  curve.n_layers = acc.size() / 4;
  curve.acc = std::move(acc);
  return curve;
}

template std::vector<float> pool_hidden<float>(const HiddenStateCache<float>&,
                                               const SequenceLayout&, size_t, TokenType);
template std::vector<double> pool_hidden<double>(const HiddenStateCache<double>&,
                                                 const SequenceLayout&, size_t, TokenType);
template ProbeClassifier<float> train_probe<float>(const Tensor<float>&,
                                                   const std::vector<int>&, uint64_t,
                                                   const ProbeTrainConfig&);
template ProbeClassifier<double> train_probe<double>(const Tensor<double>&,
                                                     const std::vector<int>&, uint64_t,
                                                     const ProbeTrainConfig&);
template double probe_accuracy<float>(const ProbeClassifier<float>&,
                                      const Tensor<float>&, const std::vector<int>&);
template double probe_accuracy<double>(const ProbeClassifier<double>&,
                                       const Tensor<double>&, const std::vector<int>&);
template FeatureBank<float> extract_features<float>(const Model<float>&, const Dataset&,
                                                    const Tokenizer&, int);
template FeatureBank<double> extract_features<double>(const Model<double>&,
                                                      const Dataset&, const Tokenizer&,
                                                      int);
template LayerAccuracyCurve probe_sweep<float>(const Model<float>&, const Dataset&,
                                               const Dataset&, const Tokenizer&,
                                               uint64_t, const ProbeTrainConfig&, int);
template LayerAccuracyCurve probe_sweep<double>(const Model<double>&, const Dataset&,
                                                const Dataset&, const Tokenizer&,
                                                uint64_t, const ProbeTrainConfig&, int);

}  // namespace probelab
