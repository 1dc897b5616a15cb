#pragma once

#include <atomic>
#include <set>
#include <string>

#include "probelab/image.hpp"
#include "probelab/tape.hpp"
#include "probelab/tokenizer.hpp"

namespace probelab {

struct ModelConfig {
  size_t d_model = 64;
  size_t n_layers = 12;
  size_t n_heads = 4;
  size_t vocab_size = 0;  // 0 = take the tokenizer's vocabulary
  size_t patch_px = 4;
  size_t image_px = 32;
  size_t max_seq = 192;

  void validate() const;
  size_t patches_per_side() const { return image_px / patch_px; }
  size_t n_image_tokens() const { return patches_per_side() * patches_per_side(); }
  size_t patch_dim() const { return patch_px * patch_px * 3; }

  bool operator==(const ModelConfig&) const = default;
};

// Which sequence positions hold image tokens, question text, and the final
// prompt token. Spans are half-open; position 0 is BOS (outside both spans).
struct SequenceLayout {
  size_t image_begin = 0, image_end = 0;
  size_t text_begin = 0, text_end = 0;
  size_t last_index = 0;
};

// Post-block hidden states captured during one forward pass: one [s x d]
// matrix per transformer layer.
template <typename T>
struct HiddenStateCache {
  std::vector<Tensor<T>> layers;
};

// Trainable parameter groups by name. Everything absent is frozen.
struct FreezeMask {
  std::set<std::string> trainable;
  bool is_trainable(const std::string& group) const {
    return trainable.count(group) != 0;
  }
};

// Decoder-only transformer with a patch projector in front: pre-norm blocks,
// GELU MLP (ratio 4), learned positional embeddings, per-layer hidden-state
// taps at the block output.
template <typename T>
class Model {
 public:
  struct Block {
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> w1, b1, w2, b2;
  };

  Model(ModelConfig cfg, uint64_t seed);
  Model(const Model& other);
  Model& operator=(const Model& other);

  const ModelConfig& config() const { return cfg_; }

  struct ParamRef {
    std::string name;
    std::string group;
    Tensor<T>* tensor;
  };
  struct ConstParamRef {
    std::string name;
    std::string group;
    const Tensor<T>* tensor;
  };
  // Canonical parameter enumeration; order is part of the checkpoint and
  // training determinism contract.
  std::vector<ParamRef> params();
  std::vector<ConstParamRef> params() const;
  size_t param_count() const;
  // "embeddings", "projector", "layer_0".."layer_{n-1}", "lm_head"
  std::vector<std::string> group_names() const;

  // Parameter leaves registered on a tape in canonical order.
  struct Bound {
    std::vector<Val> vals;
  };
  Bound bind(Tape<T>& tape, const FreezeMask& mask) const;

  struct ForwardOut {
    Val logits;                    // [s x vocab]
    SequenceLayout layout;
    std::vector<Val> block_out;    // n_layers entries, each [s x d]
    std::vector<int> full_tokens;  // BOS, IMG x n_image, text ids
  };
  ForwardOut forward_on(Tape<T>& tape, const Bound& bound,
                        const std::vector<int>& text_ids, const Image& img) const;

  // Patch projector output: one d_model-wide embedding per image patch,
  // patches in row-major order.
  Tensor<T> encode_image(const Image& img) const;

  struct InferenceOut {
    Tensor<T> logits;
    HiddenStateCache<T> cache;
    SequenceLayout layout;
  };
  InferenceOut forward(const std::vector<int>& text_ids, const Image& img,
                       bool want_cache = true) const;

  // Greedy decoding until EOS, max_new tokens, or the context limit.
  std::string generate(const std::vector<int>& text_ids, const Image& img,
                       int max_new, const Tokenizer& tok) const;

  uint64_t forward_calls() const { return forward_calls_.load(); }

  void save_checkpoint(const std::string& path) const;
  static Model<T> load_checkpoint(const std::string& path);

  Tensor<T>& tok_emb() { return tok_emb_; }
  Tensor<T>& pos_emb() { return pos_emb_; }
  Tensor<T>& head_w() { return head_w_; }
  Tensor<T>& head_b() { return head_b_; }
  std::vector<Block>& blocks() { return blocks_; }

 private:
  Model() = default;
  void init_params(uint64_t seed);
  Tensor<T> extract_patches(const Image& img) const;

  ModelConfig cfg_;
  Tensor<T> tok_emb_;  // vocab x d
  Tensor<T> pos_emb_;  // max_seq x d
  Tensor<T> proj_w_;   // d x patch_dim
  Tensor<T> proj_b_;   // d
  std::vector<Block> blocks_;
  Tensor<T> lnf_g_, lnf_b_;
  Tensor<T> head_w_;  // vocab x d
  Tensor<T> head_b_;  // vocab
  mutable std::atomic<uint64_t> forward_calls_{0};
};

// Mask with exactly the named groups trainable. Unknown names are rejected.
template <typename T>
FreezeMask set_trainable(const Model<T>& model, const std::set<std::string>& groups);

extern template class Model<float>;
extern template class Model<double>;
extern template FreezeMask set_trainable<float>(const Model<float>&,
                                                const std::set<std::string>&);
extern template FreezeMask set_trainable<double>(const Model<double>&,
                                                 const std::set<std::string>&);

}  // namespace probelab
