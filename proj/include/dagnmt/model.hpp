#pragma once

// Multilingual encoder-decoder. The encoder consumes source tokens with the
// target-language tag prepended; the lattice decoder turns S learned position
// slots into word and link predictions over the generation canvas; a causal
// decoder with the same width/depth serves as the autoregressive baseline for
// speed and quality comparisons.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dagnmt/dag_output.hpp"
#include "dagnmt/rng.hpp"
#include "dagnmt/special_tokens.hpp"
#include "dagnmt/tensor.hpp"

namespace dagnmt {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 2;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int ffn_width = 128;
  int vocab_size = 0;
  int n_languages = 0;
  int max_positions = 256;
  double upsample_factor = 4.0;
  double dropout = 0.0;
  uint64_t seed = 1;

  void validate() const;
};

struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;  // [d x d]
};

struct LayerNormParams {
  Tensor gamma, beta;  // [d]
};

struct FfnParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayer {
  LayerNormParams ln_attn;
  AttentionParams self_attn;
  LayerNormParams ln_ffn;
  FfnParams ffn;
};

struct DecoderLayer {
  LayerNormParams ln_self;
  AttentionParams self_attn;
  LayerNormParams ln_cross;
  AttentionParams cross_attn;
  LayerNormParams ln_ffn;
  FfnParams ffn;
};

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  // T_x contextual states; the prepended tag row is folded in and dropped
  Tensor encode(const std::vector<int>& x, int l_tgt) const;
  std::vector<Tensor> encode_batch(const std::vector<std::vector<int>>& xs,
                                   const std::vector<int>& l_tgts) const;

  // canvas size for a source of length T_x; min_steps re-upsamples when the
  // target is longer than the default canvas
  int num_steps(int t_x, int min_steps = 0) const;

  DagOutput decode_dag(const Tensor& enc, int t_x, int min_steps = 0) const;

  // word and link heads on given decoder states (exposed for head tests)
  Tensor word_head(const Tensor& dec_states) const;
  Tensor link_head(const Tensor& dec_states) const;

  // next-token log-probabilities [V] for a BOS-initiated prefix
  Tensor decode_ar_step(const Tensor& enc, const std::vector<int>& prefix) const;

  // teacher-forced log p(y | x): scalar tensor, differentiable
  Tensor ar_sequence_logp(const Tensor& enc, const std::vector<int>& y) const;

  // greedy rollout until EOS or max_len tokens; EOS is masked before min_len
  std::vector<int> greedy_ar(const Tensor& enc, int max_len, int min_len = 0) const;

  std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  Tensor param(const std::string& name) const;

  void zero_grads();

  // dropout source during training; decoding paths never draw from it
  void set_train_rng(Rng* rng) { train_rng_ = rng; }

 private:
  Tensor embed_positions(const Tensor& tok, const Tensor& pos_table, int len) const;
  Tensor maybe_dropout(const Tensor& x) const;
  Tensor mha(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
             bool causal) const;
  Tensor ffn_block(const Tensor& x, const FfnParams& p) const;
  Tensor ln(const Tensor& x, const LayerNormParams& p) const;
  Tensor run_decoder(const std::vector<DecoderLayer>& layers, const LayerNormParams& final_ln,
                     Tensor h, const Tensor& enc, bool causal_self) const;

  Tensor make_param(const std::string& name, Shape shape, double stddev, Rng& rng);
  Tensor make_const_param(const std::string& name, Shape shape, double value);
  AttentionParams make_attn(const std::string& prefix, Rng& rng);
  LayerNormParams make_ln(const std::string& prefix);
  FfnParams make_ffn(const std::string& prefix, Rng& rng);

  ModelConfig cfg_;
  Tensor tok_embed_;            // [V x d]
  Tensor enc_pos_, dag_pos_, ar_pos_;
  std::vector<EncoderLayer> enc_layers_;
  std::vector<DecoderLayer> dag_layers_, ar_layers_;
  LayerNormParams enc_final_ln_, dag_final_ln_, ar_final_ln_;
  Tensor w_word_;               // [d x V]
  Tensor w_link_k_, w_link_q_;  // [d x d]
  Tensor w_ar_out_;             // [d x V]
  Rng* train_rng_ = nullptr;

  std::vector<std::pair<std::string, Tensor>> params_;
};

// Checkpoint container: little-endian, versioned, named f64 arrays.
struct CheckpointExtra {
  std::vector<std::pair<std::string, std::vector<double>>> arrays;
};

void save_checkpoint(const std::string& path, const Model& model,
                     const CheckpointExtra* extra = nullptr);
Model load_checkpoint(const std::string& path, CheckpointExtra* extra_out = nullptr);

}  // namespace dagnmt
