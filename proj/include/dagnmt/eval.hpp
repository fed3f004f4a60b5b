#pragma once

// Evaluation: corpus BLEU, low-frequency-word preservation against the exact
// synthetic lexicon, batch-size-one latency benchmarking, and whole-corpus
// translation helpers shared by validation, evaluation and the CLI.

#include <array>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dagnmt/data.hpp"
#include "dagnmt/decoding.hpp"
#include "dagnmt/model.hpp"

namespace dagnmt {

struct BleuResult {
  double score = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  long long hyp_len = 0;
  long long ref_len = 0;
};

// corpus-level BLEU-4: clipped n-gram precisions, geometric mean, exponential
// brevity penalty; any zero precision gives a zero score
BleuResult bleu(const std::vector<std::vector<int>>& hyps,
                const std::vector<std::vector<int>>& refs);

// frequency-decile buckets over token types by training-corpus counts;
// bucket 0 holds the rarest types
class FrequencyBuckets {
 public:
  FrequencyBuckets(const std::unordered_map<int, long long>& counts, int n_buckets = 10);

  int n_buckets() const { return n_buckets_; }
  int bucket_of(int token) const;  // -1 when the token was never counted
  std::pair<long long, long long> count_range(int bucket) const;

 private:
  int n_buckets_;
  std::unordered_map<int, int> assignment_;
  std::vector<std::pair<long long, long long>> ranges_;
};

struct PreservationBucket {
  long long occurrences = 0;
  long long preserved = 0;
  double ratio = 0.0;
  long long min_count = 0;
  long long max_count = 0;
};

struct PreservationReport {
  std::vector<PreservationBucket> buckets;
  long long missing = 0;  // source tokens without a lexicon entry or bucket
};

// a source token occurrence is preserved when its unique lexicon translation
// appears anywhere in the aligned hypothesis
PreservationReport preservation_ratio(const std::vector<Sample>& samples,
                                      const std::vector<std::vector<int>>& hyps,
                                      const OracleTranslator& lexicon,
                                      const FrequencyBuckets& buckets);

enum class DecoderKind { DagLookahead, DagNgramBeam, ArGreedy };

DecoderKind parse_decoder(const std::string& text);
std::string decoder_str(DecoderKind kind);

struct TranslateOptions {
  DecoderKind kind = DecoderKind::DagLookahead;
  BeamOptions beam;
  bool collapse_repeats = true;
  int special_boundary = kNumSpecials;
  const std::vector<NgramLM>* lms = nullptr;  // per language, beam decode only
  int ar_extra_len = 8;      // AR rollout cap: T_x + ar_extra_len
  double ar_min_len_ratio = 0.0;  // EOS masked before ratio * T_x tokens
};

std::vector<int> translate_one(const Model& model, const std::vector<int>& x, int l_tgt,
                               const TranslateOptions& opts);

// parallel across sentences, deterministic
std::vector<std::vector<int>> translate_many(const Model& model,
                                             const std::vector<std::vector<int>>& xs, int l_tgt,
                                             const TranslateOptions& opts);

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  int n = 0;
};

// batch size is fixed at one; sentences are decoded serially for timing
// fidelity after `warmup` untimed decodes
LatencyStats bench_latency(const Model& model, const std::vector<std::vector<int>>& xs,
                           int l_tgt, const TranslateOptions& opts, int warmup);

struct DirectionScore {
  int l_src = -1;
  int l_tgt = -1;
  double bleu = 0.0;
  int n_sentences = 0;
  bool supervised = false;
};

struct EvalReport {
  std::vector<DirectionScore> directions;
  double supervised_avg = 0.0;
  double zero_shot_avg = 0.0;
  bool has_preservation = false;
  PreservationReport preservation;
  std::vector<std::pair<long long, long long>> bucket_ranges;

  void save_json(const std::string& path) const;
};

// decode and score every test direction; preservation is aggregated over all
// of them with the exact lexicon
EvalReport evaluate_model(const Model& model, const Corpus& corpus,
                          const TranslateOptions& opts);

// mean validation BLEU over the supervised directions (checkpoint selection)
double validation_bleu(const Model& model, const Corpus& corpus, const TranslateOptions& opts);

// one n-gram model per language, trained on the train-split target sides
std::vector<NgramLM> train_language_models(const Corpus& corpus, int order = 3,
                                           double add_k = 0.1);

}  // namespace dagnmt
