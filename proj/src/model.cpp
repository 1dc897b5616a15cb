#include "probelab/model.hpp"

#include <cstring>
#include <numeric>

#include "probelab/io.hpp"
#include "probelab/kernels.hpp"
#include "probelab/optim.hpp"
#include "probelab/rng.hpp"

namespace probelab {

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || vocab_size == 0 || max_seq == 0)
    throw ConfigError("model extents must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (patch_px == 0 || image_px % patch_px != 0)
    throw ConfigError("image_px " + std::to_string(image_px) +
                      " not divisible by patch_px " + std::to_string(patch_px));
  if (n_layers < 3)
    throw ConfigError("n_layers must be >= 3 (layer segmentation needs three groups)");
  if (max_seq < 2 + n_image_tokens())
    throw ConfigError("max_seq too small for the image token span");
}

template <typename T>
Model<T>::Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg_.vocab_size == 0) cfg_.vocab_size = static_cast<size_t>(Tokenizer().vocab_size());
  cfg_.validate();
  init_params(seed);
}

template <typename T>
Model<T>::Model(const Model& other)
    : cfg_(other.cfg_),
      tok_emb_(other.tok_emb_),
      pos_emb_(other.pos_emb_),
      proj_w_(other.proj_w_),
      proj_b_(other.proj_b_),
      blocks_(other.blocks_),
      lnf_g_(other.lnf_g_),
      lnf_b_(other.lnf_b_),
      head_w_(other.head_w_),
      head_b_(other.head_b_) {}

template <typename T>
Model<T>& Model<T>::operator=(const Model& other) {
  if (this == &other) return *this;
  cfg_ = other.cfg_;
  tok_emb_ = other.tok_emb_;
  pos_emb_ = other.pos_emb_;
  proj_w_ = other.proj_w_;
  proj_b_ = other.proj_b_;
  blocks_ = other.blocks_;
  lnf_g_ = other.lnf_g_;
  lnf_b_ = other.lnf_b_;
  head_w_ = other.head_w_;
  head_b_ = other.head_b_;
  return *this;
}

template <typename T>
void Model<T>::init_params(uint64_t seed) {
  const size_t d = cfg_.d_model;
  const size_t v = cfg_.vocab_size;
  size_t salt = 0;
  auto xavier = [&](Shape shape) {
    return xavier_uniform<T>(shape, derive_seed(seed, "param", salt++));
  };
  tok_emb_ = xavier({v, d});
  pos_emb_ = xavier({cfg_.max_seq, d});
  proj_w_ = xavier({d, cfg_.patch_dim()});
  proj_b_ = Tensor<T>({d});
  blocks_.clear();
  blocks_.reserve(cfg_.n_layers);
  for (size_t l = 0; l < cfg_.n_layers; ++l) {
    Block b;
    b.ln1_g = Tensor<T>({d}, T(1));
    b.ln1_b = Tensor<T>({d});
    b.wq = xavier({d, d});
    b.bq = Tensor<T>({d});
    b.wk = xavier({d, d});
    b.bk = Tensor<T>({d});
    b.wv = xavier({d, d});
    b.bv = Tensor<T>({d});
    b.wo = xavier({d, d});
    b.bo = Tensor<T>({d});
    b.ln2_g = Tensor<T>({d}, T(1));
    b.ln2_b = Tensor<T>({d});
    b.w1 = xavier({4 * d, d});
    b.b1 = Tensor<T>({4 * d});
    b.w2 = xavier({d, 4 * d});
    b.b2 = Tensor<T>({d});
    blocks_.push_back(std::move(b));
  }
  lnf_g_ = Tensor<T>({d}, T(1));
  lnf_b_ = Tensor<T>({d});
  head_w_ = xavier({v, d});
  head_b_ = Tensor<T>({v});
}

template <typename T>
std::vector<typename Model<T>::ParamRef> Model<T>::params() {
  std::vector<ParamRef> out;
  out.push_back({"tok_emb", "embeddings", &tok_emb_});
  out.push_back({"pos_emb", "embeddings", &pos_emb_});
  out.push_back({"proj_w", "projector", &proj_w_});
  out.push_back({"proj_b", "projector", &proj_b_});
  for (size_t l = 0; l < blocks_.size(); ++l) {
    const std::string g = "layer_" + std::to_string(l);
    Block& b = blocks_[l];
    auto add = [&](const char* n, Tensor<T>* t) {
      out.push_back({g + "." + n, g, t});
    };
    add("ln1_g", &b.ln1_g);
    add("ln1_b", &b.ln1_b);
    add("wq", &b.wq);
    add("bq", &b.bq);
    add("wk", &b.wk);
    add("bk", &b.bk);
    add("wv", &b.wv);
    add("bv", &b.bv);
    add("wo", &b.wo);
    add("bo", &b.bo);
    add("ln2_g", &b.ln2_g);
    add("ln2_b", &b.ln2_b);
    add("w1", &b.w1);
    add("b1", &b.b1);
    add("w2", &b.w2);
    add("b2", &b.b2);
  }
  out.push_back({"lnf_g", "lm_head", &lnf_g_});
  out.push_back({"lnf_b", "lm_head", &lnf_b_});
  out.push_back({"head_w", "lm_head", &head_w_});
  out.push_back({"head_b", "lm_head", &head_b_});
  return out;
}

template <typename T>
std::vector<typename Model<T>::ConstParamRef> Model<T>::params() const {
  auto mut = const_cast<Model<T>*>(this)->params();
  std::vector<ConstParamRef> out;
  out.reserve(mut.size());
  for (auto& p : mut) out.push_back({p.name, p.group, p.tensor});
  return out;
}

template <typename T>
size_t Model<T>::param_count() const {
  size_t n = 0;
  for (const auto& p : params()) n += p.tensor->size();
  return n;
}

template <typename T>
std::vector<std::string> Model<T>::group_names() const {
  std::vector<std::string> out = {"embeddings", "projector"};
  for (size_t l = 0; l < cfg_.n_layers; ++l)
    out.push_back("layer_" + std::to_string(l));
  out.push_back("lm_head");
  return out;
}

template <typename T>
typename Model<T>::Bound Model<T>::bind(Tape<T>& tape, const FreezeMask& mask) const {
  Bound b;
  for (const auto& p : params()) {
    b.vals.push_back(tape.leaf(std::span<const T>(p.tensor->data),
                               p.tensor->shape, mask.is_trainable(p.group)));
  }
  return b;
}

template <typename T>
Tensor<T> Model<T>::extract_patches(const Image& img) const {
  const int px = static_cast<int>(cfg_.image_px);
  if (img.width != px || img.height != px)
    throw ShapeError("image is " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + ", model expects " +
                     std::to_string(px) + "x" + std::to_string(px));
  const size_t pp = cfg_.patch_px;
  const size_t side = cfg_.patches_per_side();
  Tensor<T> out({side * side, cfg_.patch_dim()});
  size_t row = 0;
  for (size_t py = 0; py < side; ++py) {
    for (size_t pxi = 0; pxi < side; ++pxi, ++row) {
      T* dst = out.data.data() + row * cfg_.patch_dim();
      size_t k = 0;
      for (size_t dy = 0; dy < pp; ++dy) {
        for (size_t dx = 0; dx < pp; ++dx) {
          const Rgb c = img.get(static_cast<int>(pxi * pp + dx),
                                static_cast<int>(py * pp + dy));
          dst[k++] = static_cast<T>(c.r);
          dst[k++] = static_cast<T>(c.g);
          dst[k++] = static_cast<T>(c.b);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> Model<T>::encode_image(const Image& img) const {
  const Tensor<T> patches = extract_patches(img);
  const size_t n_img = cfg_.n_image_tokens();
  const size_t d = cfg_.d_model;
  const size_t pd = cfg_.patch_dim();
  std::vector<T> wt(pd * d);
  kernels::transpose<T>(proj_w_.data.data(), wt.data(), d, pd);
  Tensor<T> out({n_img, d});
  kernels::matmul<T>(patches.data.data(), wt.data(), out.data.data(), n_img, pd, d,
                     false);
  for (size_t i = 0; i < n_img; ++i)
    kernels::add<T>(out.data.data() + i * d, proj_b_.data.data(),
                    out.data.data() + i * d, d);
  return out;
}

template <typename T>
typename Model<T>::ForwardOut Model<T>::forward_on(Tape<T>& tape, const Bound& bound,
                                                   const std::vector<int>& text_ids,
                                                   const Image& img) const {
  forward_calls_.fetch_add(1, std::memory_order_relaxed);
  const size_t n_img = cfg_.n_image_tokens();
  const size_t s = n_img + text_ids.size();
  if (text_ids.empty()) throw ContractError("prompt has no text tokens");
  if (s > cfg_.max_seq)
    throw ContractError("prompt length " + std::to_string(s) +
                        " exceeds max_seq " + std::to_string(cfg_.max_seq));
  for (int id : text_ids)
    if (id < 0 || static_cast<size_t>(id) >= cfg_.vocab_size)
      throw ContractError("text token id out of vocabulary");

  // Leaf order matches params(): tok, pos, proj_w, proj_b, 16 per block, 4 tail.
  const auto& v = bound.vals;
  const Val tok = v[0], pos = v[1], pw = v[2], pb = v[3];
  const size_t per_block = 16;
  auto bval = [&](size_t l, size_t i) { return v[4 + l * per_block + i]; };
  const size_t tail = 4 + cfg_.n_layers * per_block;
  const Val lnf_g = v[tail], lnf_b = v[tail + 1], hw = v[tail + 2], hb = v[tail + 3];

  Val patches = tape.constant(extract_patches(img));
  Val ximg = tape.add(tape.matmul(patches, tape.transpose(pw)), pb);
  Val xtxt = tape.embedding(tok, text_ids);
  Val x = tape.concat_rows(ximg, xtxt);
  std::vector<int> positions(s);
  std::iota(positions.begin(), positions.end(), 0);
  x = tape.add(x, tape.embedding(pos, positions));

  ForwardOut out;
  out.block_out.reserve(cfg_.n_layers);
  const int heads = static_cast<int>(cfg_.n_heads);
  for (size_t l = 0; l < cfg_.n_layers; ++l) {
    Val xn = tape.layernorm(x, bval(l, 0), bval(l, 1));
    Val q = tape.add(tape.matmul(xn, tape.transpose(bval(l, 2))), bval(l, 3));
    Val k = tape.add(tape.matmul(xn, tape.transpose(bval(l, 4))), bval(l, 5));
    Val vv = tape.add(tape.matmul(xn, tape.transpose(bval(l, 6))), bval(l, 7));
    Val att = tape.causal_attention(q, k, vv, heads);
    Val ao = tape.add(tape.matmul(att, tape.transpose(bval(l, 8))), bval(l, 9));
    x = tape.add(x, ao);
    Val hn = tape.layernorm(x, bval(l, 10), bval(l, 11));
    Val h1 = tape.gelu(tape.add(tape.matmul(hn, tape.transpose(bval(l, 12))), bval(l, 13)));
    Val h2 = tape.add(tape.matmul(h1, tape.transpose(bval(l, 14))), bval(l, 15));
    x = tape.add(x, h2);
    out.block_out.push_back(x);
  }
  Val xf = tape.layernorm(x, lnf_g, lnf_b);
  out.logits = tape.add(tape.matmul(xf, tape.transpose(hw)), hb);

  out.layout.image_begin = 0;
  out.layout.image_end = n_img;
  out.layout.text_begin = n_img;
  out.layout.text_end = s;
  out.layout.last_index = s - 1;

  out.full_tokens.reserve(s);
  out.full_tokens.insert(out.full_tokens.end(), n_img, Tokenizer::kImg);
  out.full_tokens.insert(out.full_tokens.end(), text_ids.begin(), text_ids.end());
  return out;
}

template <typename T>
typename Model<T>::InferenceOut Model<T>::forward(const std::vector<int>& text_ids,
                                                  const Image& img,
                                                  bool want_cache) const {
  Tape<T> tape(false);
  Bound bound = bind(tape, FreezeMask{});
  ForwardOut fo = forward_on(tape, bound, text_ids, img);
  InferenceOut out;
  auto lg = tape.value(fo.logits);
  out.logits = Tensor<T>(tape.shape(fo.logits),
                         std::vector<T>(lg.begin(), lg.end()));
  if (want_cache) {
    out.cache.layers.reserve(fo.block_out.size());
    for (Val b : fo.block_out) {
      auto d = tape.value(b);
      out.cache.layers.emplace_back(tape.shape(b), std::vector<T>(d.begin(), d.end()));
    }
  }
  out.layout = fo.layout;
  return out;
}

template <typename T>
std::string Model<T>::generate(const std::vector<int>& text_ids, const Image& img,
                               int max_new, const Tokenizer& tok) const {
  if (max_new < 1) throw ContractError("generate needs max_new >= 1");
  std::vector<int> ids = text_ids;
  std::vector<int> emitted;
  const size_t n_img = cfg_.n_image_tokens();
  for (int step = 0; step < max_new; ++step) {
    if (n_img + ids.size() + 1 > cfg_.max_seq) break;
    InferenceOut io = forward(ids, img, /*want_cache=*/false);
    const size_t s = io.logits.rows();
    const size_t vsz = io.logits.cols();
    const T* row = io.logits.data.data() + (s - 1) * vsz;
    size_t best = 0;
    for (size_t j = 1; j < vsz; ++j)
      if (row[j] > row[best]) best = j;
    if (static_cast<int>(best) == Tokenizer::kEos) break;
    emitted.push_back(static_cast<int>(best));
    ids.push_back(static_cast<int>(best));
  }
  return tok.decode(emitted);
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;
  uint8_t u8() {
    if (pos >= buf.size()) throw IoError("checkpoint truncated");
    return buf[pos++];
  }
  uint16_t u16() {
    uint16_t v = u8();
    v |= static_cast<uint16_t>(u8()) << 8;
    return v;
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(size_t n) {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated");
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

template <typename T>
void Model<T>::save_checkpoint(const std::string& path) const {
  std::vector<uint8_t> out;
  out.push_back('P');
  out.push_back('L');
  out.push_back('A');
  out.push_back('B');
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(cfg_.d_model));
  put_u32(out, static_cast<uint32_t>(cfg_.n_layers));
  put_u32(out, static_cast<uint32_t>(cfg_.n_heads));
  put_u32(out, static_cast<uint32_t>(cfg_.vocab_size));
  put_u32(out, static_cast<uint32_t>(cfg_.patch_px));
  put_u32(out, static_cast<uint32_t>(cfg_.image_px));
  put_u32(out, static_cast<uint32_t>(cfg_.max_seq));
  const auto ps = params();
  put_u32(out, static_cast<uint32_t>(ps.size()));
  for (const auto& p : ps) {
    put_u16(out, static_cast<uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<uint32_t>(p.tensor->shape.size()));
    for (size_t e : p.tensor->shape) put_u32(out, static_cast<uint32_t>(e));
    for (T v : p.tensor->data) put_f32(out, static_cast<float>(v));
  }
  atomic_write_file(path, out);
}

template <typename T>
Model<T> Model<T>::load_checkpoint(const std::string& path) {
  const std::vector<uint8_t> buf = read_binary_file(path);
  Reader r{buf};
  if (r.str(4) != "PLAB") throw IoError("bad checkpoint magic in " + path);
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  cfg.d_model = r.u32();
  cfg.n_layers = r.u32();
  cfg.n_heads = r.u32();
  cfg.vocab_size = r.u32();
  cfg.patch_px = r.u32();
  cfg.image_px = r.u32();
  cfg.max_seq = r.u32();
  Model<T> model(cfg, /*seed=*/0);
  auto ps = model.params();
  const uint32_t n = r.u32();
  if (n != ps.size()) throw IoError("checkpoint parameter count mismatch");
  for (auto& p : ps) {
    const uint16_t len = r.u16();
    const std::string name = r.str(len);
    if (name != p.name)
      throw IoError("checkpoint parameter '" + name + "' where '" + p.name +
                    "' was expected");
    const uint32_t ndim = r.u32();
    Shape shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = r.u32();
    if (shape != p.tensor->shape)
      throw IoError("checkpoint shape mismatch for " + name);
    for (T& v : p.tensor->data) v = static_cast<T>(r.f32());
  }
  if (r.pos != buf.size()) throw IoError("trailing bytes in checkpoint");
  return model;
}

template <typename T>
FreezeMask set_trainable(const Model<T>& model, const std::set<std::string>& groups) {
  const auto known = model.group_names();
  for (const auto& g : groups) {
    bool ok = false;
    for (const auto& k : known) ok = ok || (k == g);
    if (!ok) throw ConfigError("unknown parameter group '" + g + "'");
  }
  FreezeMask mask;
  mask.trainable = groups;
  return mask;
}

template class Model<float>;
template class Model<double>;
template FreezeMask set_trainable<float>(const Model<float>&,
                                         const std::set<std::string>&);
template FreezeMask set_trainable<double>(const Model<double>&,
                                          const std::set<std::string>&);

}  // namespace probelab
