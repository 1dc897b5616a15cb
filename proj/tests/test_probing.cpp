#include <doctest.h>

#include <cmath>

#include "probelab/probing.hpp"
#include "probelab/rng.hpp"

using namespace probelab;

namespace {

// Separable 2-D blobs: class centers (-1.5, 0) / (1.5, 0), points uniform in
// the unit disk, so the gap between class hulls is exactly 1.
template <typename T>
void make_blobs(size_t n, uint64_t seed, Tensor<T>& x, std::vector<int>& y) {
  Rng rng(seed);
  x = Tensor<T>({n, 2});
  y.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    double px, py;
    do {
      px = rng.uniform(-1.0, 1.0);
      py = rng.uniform(-1.0, 1.0);
    } while (px * px + py * py > 1.0);
    x.at(i, 0) = static_cast<T>(px + (label ? 1.5 : -1.5));
    x.at(i, 1) = static_cast<T>(py);
    y[i] = label;
  }
}

HiddenStateCache<double> cache_from(const std::vector<Tensor<double>>& layers) {
  HiddenStateCache<double> c;
  c.layers = layers;
  return c;
}

}  // namespace

TEST_CASE("pooling: singleton span returns the row, pairs average") {
  Tensor<double> h({3, 4});
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = 0; j < 4; ++j) h.at(i, j) = static_cast<double>(i * 10 + j);
  const auto cache = cache_from({h});
  SequenceLayout layout{0, 1, 1, 3, 2};  // image [0,1), text [1,3), last 2
  const auto img = pool_hidden<double>(cache, layout, 0, TokenType::image_token);
  for (size_t j = 0; j < 4; ++j) CHECK(img[j] == doctest::Approx(h.at(0, j)));
  const auto txt = pool_hidden<double>(cache, layout, 0, TokenType::text_token);
  for (size_t j = 0; j < 4; ++j)
    CHECK(txt[j] == doctest::Approx((h.at(1, j) + h.at(2, j)) / 2));
  const auto last = pool_hidden<double>(cache, layout, 0, TokenType::last_token);
  for (size_t j = 0; j < 4; ++j) CHECK(last[j] == doctest::Approx(h.at(2, j)));
}

TEST_CASE("all-token pooling equals the weighted mean of image and text means") {
  Rng rng(5);
  Tensor<double> h({7, 6});
  for (double& v : h.data) v = rng.uniform(-2, 2);
  const auto cache = cache_from({h});
  SequenceLayout layout{0, 3, 3, 7, 6};
  const auto img = pool_hidden<double>(cache, layout, 0, TokenType::image_token);
  const auto txt = pool_hidden<double>(cache, layout, 0, TokenType::text_token);
  const auto all = pool_hidden<double>(cache, layout, 0, TokenType::all_token);
  for (size_t j = 0; j < 6; ++j)
    CHECK(all[j] == doctest::Approx((3.0 * img[j] + 4.0 * txt[j]) / 7.0));
}

TEST_CASE("pooling contract errors") {
  Tensor<double> h({3, 4});
  const auto cache = cache_from({h});
  SequenceLayout empty_img{0, 0, 0, 3, 2};
  CHECK_THROWS_AS(pool_hidden<double>(cache, empty_img, 0, TokenType::image_token),
                  ContractError);
  SequenceLayout ok{0, 1, 1, 3, 2};
  CHECK_THROWS_AS(pool_hidden<double>(cache, ok, 1, TokenType::last_token),
                  ContractError);
}

TEST_CASE("pooling scales linearly with the hidden states") {
  Rng rng(6);
  Tensor<double> h({5, 3});
  for (double& v : h.data) v = rng.uniform(-1, 1);
  Tensor<double> h2 = h;
  for (double& v : h2.data) v *= 3.0;
  SequenceLayout layout{0, 2, 2, 5, 4};
  for (TokenType t : token_types()) {
    const auto a = pool_hidden<double>(cache_from({h}), layout, 0, t);
    const auto b = pool_hidden<double>(cache_from({h2}), layout, 0, t);
    for (size_t j = 0; j < 3; ++j) CHECK(b[j] == doctest::Approx(3.0 * a[j]));
  }
}

TEST_CASE("train_probe reaches 99% on separable blobs") {
  Tensor<double> xtr, xte;
  std::vector<int> ytr, yte;
  make_blobs(2000, 11, xtr, ytr);
  make_blobs(2000, 12, xte, yte);
  const ProbeClassifier<double> clf = train_probe<double>(xtr, ytr, 3);
  CHECK(probe_accuracy<double>(clf, xte, yte) >= 0.99);
}

TEST_CASE("train_probe lands at chance on shuffled labels") {
  Tensor<double> xtr, xte;
  std::vector<int> ytr, yte;
  make_blobs(2000, 21, xtr, ytr);
  make_blobs(1000, 22, xte, yte);
  Rng rng(23);
  rng.shuffle(ytr);  // labels decoupled from features
  rng.shuffle(yte);
  const ProbeClassifier<double> clf = train_probe<double>(xtr, ytr, 3);
  const double acc = probe_accuracy<double>(clf, xte, yte);
  CHECK(acc >= 0.45);
  CHECK(acc <= 0.55);
}

TEST_CASE("train_probe is deterministic per seed") {
  Tensor<double> x;
  std::vector<int> y;
  make_blobs(512, 31, x, y);
  const ProbeClassifier<double> a = train_probe<double>(x, y, 9);
  const ProbeClassifier<double> b = train_probe<double>(x, y, 9);
  CHECK(a.w.data == b.w.data);
  CHECK(a.b.data == b.b.data);
}

TEST_CASE("probe_accuracy counting and tie-breaking") {
  ProbeClassifier<double> clf;
  clf.w = Tensor<double>({2, 1}, {1.0, -1.0});  // z0 = x, z1 = -x
  clf.b = Tensor<double>({2});
  Tensor<double> x({4, 1}, {1.0, -1.0, 1.0, -1.0});
  // predictions: x>0 -> class 0, x<0 -> class 1
  CHECK(probe_accuracy<double>(clf, x, {0, 1, 0, 1}) == doctest::Approx(1.0));
  CHECK(probe_accuracy<double>(clf, x, {0, 1, 0, 0}) == doctest::Approx(0.75));
  // Zero classifier ties everywhere -> predicts class 0.
  ProbeClassifier<double> zero;
  zero.w = Tensor<double>({2, 3});
  zero.b = Tensor<double>({2});
  Tensor<double> xz({4, 3}, std::vector<double>(12, 0.5));
  CHECK(probe_accuracy<double>(zero, xz, {0, 0, 1, 1}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(probe_accuracy<double>(zero, Tensor<double>({0, 3}), {}),
                  ContractError);
}

TEST_CASE("probe sweep fills every cell and reuses one forward per sample") {
  const Tokenizer tok;
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 3;
  cfg.n_heads = 2;
  cfg.patch_px = 8;
  cfg.image_px = 24;
  cfg.max_seq = 64;
  Model<double> model(cfg, 17);
  const TaskGenConfig gen{24};
  Dataset train = generate_dataset(TaskKind::visual_attr, 24, 1, gen);
  Dataset test = generate_dataset(TaskKind::visual_attr, 12, 2, gen);
  ProbeTrainConfig pcfg;
  pcfg.epochs = 2;
  const uint64_t calls_before = model.forward_calls();
  const LayerAccuracyCurve curve = probe_sweep(model, train, test, tok, 5, pcfg, 1);
  CHECK(model.forward_calls() - calls_before == 36);  // one per sample
  CHECK(curve.n_layers == 3);
  CHECK(curve.acc.size() == 12);
  for (double a : curve.acc) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }
  CHECK(curve.n_test == 12);
  // CSV round-trip
  const std::string csv = curve_to_csv(curve);
  const LayerAccuracyCurve back = curve_from_csv(csv);
  CHECK(back.n_layers == curve.n_layers);
  for (size_t i = 0; i < curve.acc.size(); ++i)
    CHECK(back.acc[i] == doctest::Approx(curve.acc[i]).epsilon(1e-6));
  // stable row order: layer ascending, types image,text,all,last
  CHECK(csv.find("0,image,") != std::string::npos);
  CHECK(csv.find("\n0,text,") != std::string::npos);
}

TEST_CASE("accuracy is invariant under evaluation-set permutation") {
  Tensor<double> x;
  std::vector<int> y;
  make_blobs(64, 41, x, y);
  const ProbeClassifier<double> clf = train_probe<double>(x, y, 1);
  const double a = probe_accuracy<double>(clf, x, y);
  // reverse the evaluation order
  Tensor<double> xr({64, 2});
  std::vector<int> yr(64);
  for (size_t i = 0; i < 64; ++i) {
    xr.at(i, 0) = x.at(63 - i, 0);
    xr.at(i, 1) = x.at(63 - i, 1);
    yr[i] = y[63 - i];
  }
  CHECK(probe_accuracy<double>(clf, xr, yr) == doctest::Approx(a));
}
