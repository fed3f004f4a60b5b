#include "dagnmt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dagnmt/ops.hpp"

namespace dagnmt {

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || n_enc_layers <= 0 || n_dec_layers <= 0 || ffn_width <= 0)
    throw std::invalid_argument("model config: dimensions must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("model config: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  if (upsample_factor < 1.0)
    throw std::invalid_argument("model config: upsample_factor must be >= 1");
  if (vocab_size <= kNumSpecials)
    throw std::invalid_argument("model config: vocab_size must exceed the special tokens");
  if (n_languages < 1) throw std::invalid_argument("model config: n_languages must be >= 1");
  if (max_positions < 2) throw std::invalid_argument("model config: max_positions must be >= 2");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("model config: dropout must be in [0, 1)");
}

Tensor Model::make_param(const std::string& name, Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.values()) v = rng.normal(0.0, stddev);
  params_.emplace_back(name, t);
  return t;
}

Tensor Model::make_const_param(const std::string& name, Shape shape, double value) {
  Tensor t = Tensor::full(std::move(shape), value, true);
  params_.emplace_back(name, t);
  return t;
}

AttentionParams Model::make_attn(const std::string& prefix, Rng& rng) {
  const int d = cfg_.d_model;
  const double std = 0.02;
  AttentionParams p;
  p.w_q = make_param(prefix + ".wq", {d, d}, std, rng);
  p.w_k = make_param(prefix + ".wk", {d, d}, std, rng);
  p.w_v = make_param(prefix + ".wv", {d, d}, std, rng);
  p.w_o = make_param(prefix + ".wo", {d, d}, std, rng);
  return p;
}

LayerNormParams Model::make_ln(const std::string& prefix) {
  LayerNormParams p;
  p.gamma = make_const_param(prefix + ".g", {cfg_.d_model}, 1.0);
  p.beta = make_const_param(prefix + ".b", {cfg_.d_model}, 0.0);
  return p;
}

FfnParams Model::make_ffn(const std::string& prefix, Rng& rng) {
  const int d = cfg_.d_model, f = cfg_.ffn_width;
  FfnParams p;
  p.w1 = make_param(prefix + ".w1", {d, f}, 0.02, rng);
  p.b1 = make_const_param(prefix + ".b1", {f}, 0.0);
  p.w2 = make_param(prefix + ".w2", {f, d}, 0.02, rng);
  p.b2 = make_const_param(prefix + ".b2", {d}, 0.0);
  return p;
}

Model::Model(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const int d = cfg_.d_model, v = cfg_.vocab_size, mp = cfg_.max_positions;
  tok_embed_ = make_param("tok_embed", {v, d}, 0.02, rng);
  enc_pos_ = make_param("enc_pos", {mp, d}, 0.02, rng);
  dag_pos_ = make_param("dag_pos", {mp, d}, 0.02, rng);
  ar_pos_ = make_param("ar_pos", {mp, d}, 0.02, rng);
  for (int i = 0; i < cfg_.n_enc_layers; ++i) {
    const std::string p = "enc." + std::to_string(i);
    EncoderLayer layer;
    layer.ln_attn = make_ln(p + ".ln_attn");
    layer.self_attn = make_attn(p + ".self", rng);
    layer.ln_ffn = make_ln(p + ".ln_ffn");
    layer.ffn = make_ffn(p + ".ffn", rng);
    enc_layers_.push_back(std::move(layer));
  }
  auto build_dec = [&](const std::string& stack) {
    std::vector<DecoderLayer> layers;
    for (int i = 0; i < cfg_.n_dec_layers; ++i) {
      const std::string p = stack + "." + std::to_string(i);
      DecoderLayer layer;
      layer.ln_self = make_ln(p + ".ln_self");
      layer.self_attn = make_attn(p + ".self", rng);
      layer.ln_cross = make_ln(p + ".ln_cross");
      layer.cross_attn = make_attn(p + ".cross", rng);
      layer.ln_ffn = make_ln(p + ".ln_ffn");
      layer.ffn = make_ffn(p + ".ffn", rng);
      layers.push_back(std::move(layer));
    }
    return layers;
  };
  dag_layers_ = build_dec("dag");
  ar_layers_ = build_dec("ar");
  enc_final_ln_ = make_ln("enc.final_ln");
  dag_final_ln_ = make_ln("dag.final_ln");
  ar_final_ln_ = make_ln("ar.final_ln");
  w_word_ = make_param("w_word", {d, v}, 0.02, rng);
  w_link_k_ = make_param("w_link_k", {d, d}, 0.02, rng);
  w_link_q_ = make_param("w_link_q", {d, d}, 0.02, rng);
  w_ar_out_ = make_param("w_ar_out", {d, v}, 0.02, rng);
}

Tensor Model::param(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw std::invalid_argument("unknown parameter: " + name);
}

void Model::zero_grads() {
  for (auto& [n, t] : params_) t.zero_grad();
}

Tensor Model::maybe_dropout(const Tensor& x) const {
  if (cfg_.dropout > 0.0 && train_rng_ != nullptr && grad_enabled())
    return dropout(x, cfg_.dropout, *train_rng_);
  return x;
}

Tensor Model::ln(const Tensor& x, const LayerNormParams& p) const {
  return layer_norm(x, p.gamma, p.beta);
}

Tensor Model::mha(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                  bool causal) const {
  const int d = cfg_.d_model;
  const int dh = d / cfg_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = matmul(q_in, p.w_q);
  Tensor k = matmul(kv_in, p.w_k);
  Tensor v = matmul(kv_in, p.w_v);
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(cfg_.n_heads));
  for (int h = 0; h < cfg_.n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
    Tensor attn = attn_softmax(scores, causal);
    heads.push_back(matmul(attn, vh));
  }
  Tensor merged = cfg_.n_heads == 1 ? heads[0] : concat_cols(heads);
  return maybe_dropout(matmul(merged, p.w_o));
}

Tensor Model::ffn_block(const Tensor& x, const FfnParams& p) const {
  Tensor h = relu(add_row_vector(matmul(x, p.w1), p.b1));
  return maybe_dropout(add_row_vector(matmul(h, p.w2), p.b2));
}

Tensor Model::embed_positions(const Tensor& tok, const Tensor& pos_table, int len) const {
  std::vector<int> pos_ids(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) pos_ids[static_cast<size_t>(i)] = i;
  return maybe_dropout(add(tok, gather_rows(pos_table, pos_ids)));
}

Tensor Model::encode(const std::vector<int>& x, int l_tgt) const {
  if (x.empty()) throw std::invalid_argument("encode: empty source");
  if (l_tgt < 0 || l_tgt >= cfg_.n_languages)
    throw std::invalid_argument("encode: language id " + std::to_string(l_tgt) +
                                " outside table of " + std::to_string(cfg_.n_languages));
  std::vector<int> ids;
  ids.reserve(x.size() + 1);
  ids.push_back(lang_tag_token(l_tgt));
  for (int tok : x) {
    if (tok < 0 || tok >= cfg_.vocab_size)
      throw std::invalid_argument("encode: token id " + std::to_string(tok) +
                                  " out of vocabulary of size " + std::to_string(cfg_.vocab_size));
    ids.push_back(tok);
  }
  const int len = static_cast<int>(ids.size());
  if (len > cfg_.max_positions)
    throw std::invalid_argument("encode: source length " + std::to_string(x.size()) +
                                " exceeds max_positions " + std::to_string(cfg_.max_positions));
  Tensor h = embed_positions(gather_rows(tok_embed_, ids), enc_pos_, len);
  for (const EncoderLayer& layer : enc_layers_) {
    Tensor normed = ln(h, layer.ln_attn);
    h = add(h, mha(normed, normed, layer.self_attn, false));
    h = add(h, ffn_block(ln(h, layer.ln_ffn), layer.ffn));
  }
  h = ln(h, enc_final_ln_);
  return slice_rows(h, 1, len - 1);  // tag row folded in contextually, dropped here
}

std::vector<Tensor> Model::encode_batch(const std::vector<std::vector<int>>& xs,
                                        const std::vector<int>& l_tgts) const {
  if (xs.size() != l_tgts.size())
    throw std::invalid_argument("encode_batch: sizes disagree");
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) out.push_back(encode(xs[i], l_tgts[i]));
  return out;
}

int Model::num_steps(int t_x, int min_steps) const {
  if (t_x < 1) throw std::invalid_argument("num_steps: source length must be >= 1");
  int s = static_cast<int>(std::ceil(cfg_.upsample_factor * t_x));
  s = std::max(s, min_steps);
  s = std::max(s, 2);
  s = std::min(s, cfg_.max_positions);
  return s;
}

Tensor Model::run_decoder(const std::vector<DecoderLayer>& layers,
                          const LayerNormParams& final_ln, Tensor h, const Tensor& enc,
                          bool causal_self) const {
  for (const DecoderLayer& layer : layers) {
    Tensor normed = ln(h, layer.ln_self);
    h = add(h, mha(normed, normed, layer.self_attn, causal_self));
    h = add(h, mha(ln(h, layer.ln_cross), enc, layer.cross_attn, false));
    h = add(h, ffn_block(ln(h, layer.ln_ffn), layer.ffn));
  }
  return ln(h, final_ln);
}

Tensor Model::word_head(const Tensor& dec_states) const {
  return log_softmax(matmul(dec_states, w_word_), 1);
}

Tensor Model::link_head(const Tensor& dec_states) const {
  if (dec_states.rows() < 2)
    throw std::invalid_argument("link_head: needs at least 2 decoder states");
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
  Tensor k = matmul(dec_states, w_link_k_);
  Tensor q = matmul(dec_states, w_link_q_);
  Tensor scores = mul_scalar(matmul(k, transpose(q)), scale);
  return link_log_softmax(scores);
}

DagOutput Model::decode_dag(const Tensor& enc, int t_x, int min_steps) const {
  const int s_count = num_steps(t_x, min_steps);
  std::vector<int> pos_ids(static_cast<size_t>(s_count));
  for (int i = 0; i < s_count; ++i) pos_ids[static_cast<size_t>(i)] = i;
  Tensor h = maybe_dropout(gather_rows(dag_pos_, pos_ids));
  h = run_decoder(dag_layers_, dag_final_ln_, h, enc, /*causal_self=*/false);
  DagOutput out;
  out.S = s_count;
  out.V = cfg_.vocab_size;
  out.word_logp = word_head(h);
  out.link_logp = link_head(h);
  return out;
}

Tensor Model::decode_ar_step(const Tensor& enc, const std::vector<int>& prefix) const {
  if (prefix.empty() || prefix.front() != kBos)
    throw std::invalid_argument("decode_ar_step: prefix must start with BOS");
  const int len = static_cast<int>(prefix.size());
  if (len > cfg_.max_positions)
    throw std::invalid_argument("decode_ar_step: prefix length " + std::to_string(len) +
                                " exceeds max_positions " + std::to_string(cfg_.max_positions));
  for (int tok : prefix)
    if (tok < 0 || tok >= cfg_.vocab_size)
      throw std::invalid_argument("decode_ar_step: token id out of vocabulary");
  Tensor h = embed_positions(gather_rows(tok_embed_, prefix), ar_pos_, len);
  h = run_decoder(ar_layers_, ar_final_ln_, h, enc, /*causal_self=*/true);
  Tensor logits = matmul(slice_rows(h, len - 1, 1), w_ar_out_);
  Tensor logp = log_softmax(logits, 1);
  return logp;  // [1 x V]
}

Tensor Model::ar_sequence_logp(const Tensor& enc, const std::vector<int>& y) const {
  if (y.empty()) throw std::invalid_argument("ar_sequence_logp: empty target");
  std::vector<int> input;
  input.reserve(y.size());
  input.push_back(kBos);
  for (size_t i = 0; i + 1 < y.size(); ++i) input.push_back(y[i]);
  const int len = static_cast<int>(input.size());
  if (len > cfg_.max_positions)
    throw std::invalid_argument("ar_sequence_logp: target exceeds max_positions");
  Tensor h = embed_positions(gather_rows(tok_embed_, input), ar_pos_, len);
  h = run_decoder(ar_layers_, ar_final_ln_, h, enc, /*causal_self=*/true);
  Tensor logp = log_softmax(matmul(h, w_ar_out_), 1);
  return sum_all(select_per_row(logp, y));
}

std::vector<int> Model::greedy_ar(const Tensor& enc, int max_len, int min_len) const {
  NoGradGuard guard;
  std::vector<int> prefix = {kBos};
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_len &&
         static_cast<int>(prefix.size()) < cfg_.max_positions) {
    Tensor logp = decode_ar_step(enc, prefix);
    const double* row = logp.data();
    int best = -1;
    double best_v = -1e300;
    const bool allow_eos = static_cast<int>(out.size()) >= min_len;
    for (int v = 0; v < cfg_.vocab_size; ++v) {
      if (v == kEos && !allow_eos) continue;
      if (row[v] > best_v) {
        best_v = row[v];
        best = v;
      }
    }
    if (best == kEos) break;
    out.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint container

namespace {

constexpr char kMagic[8] = {'D', 'A', 'G', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kEndianMarker = 0x01020304u;
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const uint32_t n = read_pod<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  write_pod<uint64_t>(os, static_cast<uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& is) {
  const uint64_t n = read_pod<uint64_t>(is);
  std::vector<double> v(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated array");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const CheckpointExtra* extra) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, kEndianMarker);
  write_pod<uint32_t>(os, kVersion);
  const ModelConfig& c = model.config();
  write_pod<int32_t>(os, c.d_model);
  write_pod<int32_t>(os, c.n_heads);
  write_pod<int32_t>(os, c.n_enc_layers);
  write_pod<int32_t>(os, c.n_dec_layers);
  write_pod<int32_t>(os, c.ffn_width);
  write_pod<int32_t>(os, c.vocab_size);
  write_pod<int32_t>(os, c.n_languages);
  write_pod<int32_t>(os, c.max_positions);
  write_pod<double>(os, c.upsample_factor);
  write_pod<double>(os, c.dropout);
  write_pod<uint64_t>(os, c.seed);
  write_pod<uint32_t>(os, static_cast<uint32_t>(model.params().size()));
  for (const auto& [name, t] : model.params()) {
    write_string(os, name);
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_pod<int32_t>(os, d);
    write_doubles(os, t.values());
  }
  const uint8_t has_extra = extra != nullptr && !extra->arrays.empty() ? 1 : 0;
  write_pod<uint8_t>(os, has_extra);
  if (has_extra) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(extra->arrays.size()));
    for (const auto& [name, arr] : extra->arrays) {
      write_string(os, name);
      write_doubles(os, arr);
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path, CheckpointExtra* extra_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (read_pod<uint32_t>(is) != kEndianMarker)
    throw std::runtime_error("checkpoint: endianness mismatch in " + path);
  if (read_pod<uint32_t>(is) != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  ModelConfig c;
  c.d_model = read_pod<int32_t>(is);
  c.n_heads = read_pod<int32_t>(is);
  c.n_enc_layers = read_pod<int32_t>(is);
  c.n_dec_layers = read_pod<int32_t>(is);
  c.ffn_width = read_pod<int32_t>(is);
  c.vocab_size = read_pod<int32_t>(is);
  c.n_languages = read_pod<int32_t>(is);
  c.max_positions = read_pod<int32_t>(is);
  c.upsample_factor = read_pod<double>(is);
  c.dropout = read_pod<double>(is);
  c.seed = read_pod<uint64_t>(is);
  Model model(c);
  const uint32_t n_params = read_pod<uint32_t>(is);
  if (n_params != model.params().size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  for (auto& [name, t] : model.params()) {
    const std::string got = read_string(is);
    if (got != name)
      throw std::runtime_error("checkpoint: expected parameter " + name + ", found " + got);
    const uint32_t ndim = read_pod<uint32_t>(is);
    Shape shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = read_pod<int32_t>(is);
    if (shape != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": file has " +
                               shape_str(shape) + ", model has " + shape_str(t.shape()));
    t.values() = read_doubles(is);
    if (t.values().size() != t.numel())
      throw std::runtime_error("checkpoint: array size mismatch for " + name);
  }
  const uint8_t has_extra = read_pod<uint8_t>(is);
  if (extra_out != nullptr) extra_out->arrays.clear();
  if (has_extra) {
    const uint32_t n = read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
      std::string name = read_string(is);
      std::vector<double> arr = read_doubles(is);
      if (extra_out != nullptr) extra_out->arrays.emplace_back(std::move(name), std::move(arr));
    }
  }
  return model;
}

}  // namespace dagnmt
