#pragma once

// Inference over a generation lattice: greedy lookahead walk, lattice beam
// search with n-gram language-model reranking, and the count-based LM itself.
// Everything here is read-only over its inputs and safe to run concurrently
// across sentences.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dagnmt/dag_output.hpp"
#include "dagnmt/special_tokens.hpp"

namespace dagnmt {

// Count-based n-gram model with add-k smoothing; unseen contexts back off to
// the next lower order, grounded at the add-k unigram. Events are the tokens
// seen in training plus EOS and UNK (out-of-event tokens score as UNK).
class NgramLM {
 public:
  NgramLM() = default;

  int order() const { return order_; }
  int lang_id() const { return lang_id_; }
  double add_k() const { return add_k_; }
  int event_count() const { return static_cast<int>(event_ids_.size()); }
  const std::vector<int>& event_ids() const { return event_ids_; }

  // log p(token | context); context is the raw preceding tokens (any length)
  double cond_logp(const std::vector<int>& context, int token) const;

  // sum of per-token conditional log-probs with implicit BOS padding
  double sentence_logp(const std::vector<int>& tokens) const;

  void save(const std::string& path) const;
  static NgramLM load(const std::string& path);

  friend NgramLM lm_train(const std::vector<std::vector<int>>& corpus, int order, int lang_id,
                          double add_k);

 private:
  int local(int token) const;
  uint64_t pack(const int* local_ids, int k) const;

  int order_ = 0;
  int lang_id_ = -1;
  double add_k_ = 0.1;
  std::vector<int> event_ids_;                    // sorted raw token ids
  std::unordered_map<int, int> to_local_;
  int local_unk_ = 0;
  // per k in [1, order]: k-gram counts and context continuation totals
  std::vector<std::unordered_map<uint64_t, long long>> gram_counts_;
  std::vector<std::unordered_map<uint64_t, long long>> ctx_counts_;
  long long total_events_ = 0;
};

NgramLM lm_train(const std::vector<std::vector<int>>& corpus, int order, int lang_id,
                 double add_k = 0.1);

// truncate at the first EOS, optionally collapse adjacent repeats, then strip
// ids below special_boundary
std::vector<int> postprocess(const std::vector<int>& raw, bool collapse_repeats = true,
                             int special_boundary = kNumSpecials);

struct WalkResult {
  std::vector<int> tokens;  // raw emitted tokens, one per visited step
  std::vector<int> steps;   // strictly increasing, starts at 0, ends at S-1
  double dag_score = 0.0;   // accumulated link + word log-probability
};

// greedy walk: emit the argmax word at step 0, then repeatedly take the
// (next step, word) pair maximizing link + word score; ties break toward the
// lowest step then the lowest token id
WalkResult lookahead_walk(const DagTables& dag);

std::vector<int> lookahead_decode(const DagTables& dag, bool collapse_repeats = true,
                                  int special_boundary = kNumSpecials);

struct BeamOptions {
  int beam_width = 8;
  double lm_weight = 0.1;
  double len_alpha = 0.6;
  bool collapse_repeats = true;
  int special_boundary = kNumSpecials;
};

struct BeamResult {
  std::vector<int> tokens;     // post-processed best candidate
  double best_dag_score = 0.0; // max dag score over all finished candidates
  double chosen_dag_score = 0.0;
  int n_candidates = 0;
};

// Lattice beam: expansions over (next step, word) pairs ranked by dag score,
// with the greedy walk always included among the candidates; finished
// candidates are reranked by dag/len^alpha + lm_weight * lm/len.
BeamResult ngram_beam_search_full(const DagTables& dag, const NgramLM& lm,
                                  const BeamOptions& opts);

std::vector<int> ngram_beam_search(const DagTables& dag, const NgramLM& lm,
                                   const BeamOptions& opts);

}  // namespace dagnmt
