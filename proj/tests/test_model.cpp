#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "probelab/io.hpp"
#include "probelab/model.hpp"
#include "probelab/rng.hpp"

using namespace probelab;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 3;
  cfg.n_heads = 2;
  cfg.patch_px = 8;
  cfg.image_px = 32;  // 16 image tokens
  cfg.max_seq = 64;
  return cfg;
}

Image test_image(int px, float base = 0.2f) {
  Image img(px, px, {base, base, base});
  img.fill_rect(2, 2, px / 2, px / 2, {0.9f, 0.1f, 0.4f});
  return img;
}

template <typename T>
std::vector<uint8_t> checkpoint_bytes(const Model<T>& m, const std::string& name) {
  const auto path = std::filesystem::temp_directory_path() / name;
  m.save_checkpoint(path.string());
  return read_binary_file(path);
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
  ModelConfig cfg;  // defaults: d=64, L=12, heads=4, img 32/4, max_seq 192
  const Tokenizer tok;
  Model<double> m(cfg, 1);
  const size_t d = 64, L = 12, S = 192;
  const size_t V = static_cast<size_t>(tok.vocab_size());
  const size_t pd = 4 * 4 * 3;
  const size_t per_layer = 12 * d * d + 13 * d;
  const size_t expected =
      V * d + S * d + (d * pd + d) + L * per_layer + 2 * d + (V * d + V);
  CHECK(m.param_count() == expected);
}

TEST_CASE("same seed gives bit-identical parameters, different seed differs") {
  Model<double> a(small_cfg(), 42);
  Model<double> b(small_cfg(), 42);
  Model<double> c(small_cfg(), 43);
  CHECK(checkpoint_bytes(a, "pl_a.ckpt") == checkpoint_bytes(b, "pl_b.ckpt"));
  CHECK(checkpoint_bytes(a, "pl_a2.ckpt") != checkpoint_bytes(c, "pl_c.ckpt"));
}

TEST_CASE("too-shallow model is rejected") {
  ModelConfig cfg = small_cfg();
  cfg.n_layers = 2;
  CHECK_THROWS_AS(Model<double>(cfg, 1), ConfigError);
}

TEST_CASE("encode_image geometry and locality") {
  Model<double> m(small_cfg(), 7);
  const Image img = test_image(32);
  const Tensor<double> e = m.encode_image(img);
  CHECK(e.rows() == 16);
  CHECK(e.cols() == 16);

  // All-zero image with zero projector bias -> all-zero embeddings.
  const Image zero(32, 32, {0, 0, 0});
  const Tensor<double> ez = m.encode_image(zero);
  for (double v : ez.data) CHECK(v == 0.0);

  // Changing exactly one patch changes exactly one token embedding.
  Image img2 = img;
  img2.fill_rect(8, 8, 8, 8, {0.5f, 0.5f, 0.5f});  // patch (1,1) -> index 5
  const Tensor<double> e2 = m.encode_image(img2);
  for (size_t r = 0; r < 16; ++r) {
    bool differs = false;
    for (size_t j = 0; j < 16; ++j)
      differs = differs || e.at(r, j) != e2.at(r, j);
    CHECK(differs == (r == 5));
  }

  const Image bad(16, 16);
  CHECK_THROWS_AS(m.encode_image(bad), ShapeError);
}

TEST_CASE("forward shape contract and layout") {
  const Tokenizer tok;
  Model<double> m(small_cfg(), 3);
  const auto ids = tok.encode("Is it red?");
  const auto out = m.forward(ids, test_image(32));
  CHECK(out.cache.layers.size() == 3);
  const size_t s = 16 + ids.size();
  for (const auto& layer : out.cache.layers) {
    CHECK(layer.rows() == s);
    CHECK(layer.cols() == 16);
  }
  CHECK(out.layout.image_begin == 0);
  CHECK(out.layout.image_end == 16);
  CHECK(out.layout.text_begin == 16);
  CHECK(out.layout.text_end == s);
  CHECK(out.layout.last_index == s - 1);
  CHECK(out.logits.rows() == s);
  CHECK(out.logits.cols() == static_cast<size_t>(tok.vocab_size()));
}

TEST_CASE("prompt overflow raises") {
  const Tokenizer tok;
  ModelConfig cfg = small_cfg();
  cfg.max_seq = 20;  // 16 image tokens leave room for 4 text tokens
  Model<double> m(cfg, 3);
  CHECK_THROWS_AS(m.forward(tok.encode("this is far too long"), test_image(32)),
                  ContractError);
}

TEST_CASE("causality: hidden states before an edit are unchanged") {
  const Tokenizer tok;
  Model<double> m(small_cfg(), 5);
  const Image img = test_image(32);
  const auto a = m.forward(tok.encode("abcdef"), img);
  const auto b = m.forward(tok.encode("abcdXY"), img);
  const size_t edit_pos = 16 + 4;  // first changed position
  for (size_t l = 0; l < 3; ++l) {
    for (size_t p = 0; p < edit_pos; ++p)
      for (size_t j = 0; j < 16; ++j)
        CHECK(a.cache.layers[l].at(p, j) == b.cache.layers[l].at(p, j));
  }
  // and the edited position differs somewhere
  bool differs = false;
  for (size_t j = 0; j < 16; ++j)
    differs = differs || a.cache.layers[2].at(edit_pos, j) != b.cache.layers[2].at(edit_pos, j);
  CHECK(differs);
}

TEST_CASE("forward is a pure function of its inputs") {
  const Tokenizer tok;
  Model<double> m(small_cfg(), 5);
  const Image img = test_image(32);
  const auto a = m.forward(tok.encode("same"), img);
  const auto b = m.forward(tok.encode("same"), img);
  for (size_t l = 0; l < 3; ++l)
    CHECK(std::memcmp(a.cache.layers[l].data.data(), b.cache.layers[l].data.data(),
                      a.cache.layers[l].size() * sizeof(double)) == 0);
}

TEST_CASE("generate with a forced lm_head emits that token") {
  const Tokenizer tok;
  Model<double> m(small_cfg(), 5);
  const int one_id = tok.id_of('1');
  m.head_b().data[static_cast<size_t>(one_id)] = 1000.0;
  const std::string out = m.generate(tok.encode("q?"), test_image(32), 3, tok);
  CHECK(out == "111");
}

TEST_CASE("generate stops at EOS") {
  const Tokenizer tok;
  Model<double> m(small_cfg(), 5);
  m.head_b().data[Tokenizer::kEos] = 1000.0;
  const std::string out = m.generate(tok.encode("q?"), test_image(32), 8, tok);
  CHECK(out.empty());
}

TEST_CASE("greedy generation is deterministic") {
  const Tokenizer tok;
  Model<double> m(small_cfg(), 11);
  const Image img = test_image(32);
  const std::string a = m.generate(tok.encode("hello?"), img, 6, tok);
  const std::string b = m.generate(tok.encode("hello?"), img, 6, tok);
  CHECK(a == b);
}

TEST_CASE("checkpoint round-trip is byte-exact") {
  Model<float> m(small_cfg(), 21);
  const auto p1 = std::filesystem::temp_directory_path() / "pl_rt1.ckpt";
  const auto p2 = std::filesystem::temp_directory_path() / "pl_rt2.ckpt";
  m.save_checkpoint(p1.string());
  Model<float> loaded = Model<float>::load_checkpoint(p1.string());
  loaded.save_checkpoint(p2.string());
  CHECK(read_binary_file(p1) == read_binary_file(p2));
  CHECK(loaded.config() == m.config());
}

TEST_CASE("checkpoint rejects a corrupted magic") {
  Model<float> m(small_cfg(), 21);
  const auto p = std::filesystem::temp_directory_path() / "pl_bad.ckpt";
  m.save_checkpoint(p.string());
  auto bytes = read_binary_file(p);
  bytes[0] = 'X';
  atomic_write_file(p, bytes);
  CHECK_THROWS_AS(Model<float>::load_checkpoint(p.string()), IoError);
}

TEST_CASE("set_trainable validates group names") {
  Model<double> m(small_cfg(), 1);
  CHECK_THROWS_AS(set_trainable(m, {"layer_99"}), ConfigError);
  const FreezeMask mask = set_trainable(m, {"layer_1", "lm_head"});
  CHECK(mask.is_trainable("layer_1"));
  CHECK(mask.is_trainable("lm_head"));
  CHECK_FALSE(mask.is_trainable("layer_0"));
  CHECK_FALSE(mask.is_trainable("projector"));
}

TEST_CASE("forward call counter increments") {
  const Tokenizer tok;
  Model<double> m(small_cfg(), 1);
  const uint64_t before = m.forward_calls();
  m.forward(tok.encode("x?"), test_image(32), false);
  m.forward(tok.encode("x?"), test_image(32), false);
  CHECK(m.forward_calls() == before + 2);
}
