#pragma once

// Vocabulary, multilingual samples, synthetic corpus generation, and batch
// sampling. Synthetic languages share a concept inventory; each language
// realizes it through its own substitution cipher and word-order rule, so
// translation between any two languages is an exact invertible function and
// the corpora come with a ground-truth translator and lexicon.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dagnmt/model.hpp"
#include "dagnmt/rng.hpp"

namespace dagnmt {

class Vocabulary {
 public:
  static Vocabulary build(int n_languages, const std::vector<std::string>& words);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int n_languages() const { return n_languages_; }
  const std::string& token(int id) const;
  int id_or_unk(const std::string& token) const;
  bool is_special(int id) const { return id < kNumSpecials + n_languages_; }

  std::vector<int> encode(const std::string& line) const;  // whitespace tokens
  std::string decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  int n_languages_ = 0;
};

struct Sample {
  std::vector<int> x;  // source token ids, no tag
  int l_src = -1;
  std::vector<int> y;  // target token ids, EOS-terminated
  int l_tgt = -1;
  size_t corpus_index = 0;  // position in its direction, for diagnostics

  void validate() const;
};

class DirectionGraph {
 public:
  DirectionGraph() = default;
  DirectionGraph(int n_languages, int hub);

  int n_languages() const { return n_; }
  int hub() const { return hub_; }
  void add(int l_src, int l_tgt);
  bool has(int l_src, int l_tgt) const;
  std::vector<std::pair<int, int>> edges() const;

 private:
  int n_ = 0;
  int hub_ = 0;
  std::vector<uint8_t> adj_;
};

enum class OrderRule { Identity, Reverse, Rotate };

struct LangRule {
  OrderRule rule = OrderRule::Identity;
  int amount = 0;  // rotation offset
};

LangRule parse_lang_rule(const std::string& text);
std::string lang_rule_str(const LangRule& r);

struct SyntheticSpec {
  int n_languages = 3;
  int concept_vocab = 30;
  int hub = 0;
  std::vector<LangRule> order_rules;  // per language; empty = all identity
  int min_len = 3;
  int max_len = 8;
  int train_per_direction = 1500;
  int valid_per_direction = 64;
  int test_per_direction = 64;
  double zipf_exponent = 1.2;  // concept frequency skew
  uint64_t seed = 1;

  void validate() const;
  LangRule rule_for(int lang) const;
};

// Exact translation between languages via the shared concept inventory.
class OracleTranslator {
 public:
  explicit OracleTranslator(const SyntheticSpec& spec);

  std::vector<int> translate(const std::vector<int>& tokens, int from, int to) const;
  // unique word-level lexicon entry, ignoring word order
  int translate_token(int token, int from, int to) const;
  bool is_word_of(int token, int lang) const;
  int word_base(int lang) const;
  int concept_count() const { return spec_.concept_vocab; }

  // canonical concept sequence behind a surface sentence
  std::vector<int> to_concepts(const std::vector<int>& tokens, int lang) const;
  std::vector<int> from_concepts(const std::vector<int>& concepts, int lang) const;

 private:
  SyntheticSpec spec_;
  std::vector<std::vector<int>> cipher_;      // [lang][concept] -> word index
  std::vector<std::vector<int>> cipher_inv_;  // [lang][word index] -> concept
};

struct ParallelData {
  int l_src = -1;
  int l_tgt = -1;
  std::vector<std::vector<int>> src;  // no EOS
  std::vector<std::vector<int>> tgt;

  Sample sample(size_t i) const;
  size_t size() const { return src.size(); }
};

struct Corpus {
  SyntheticSpec spec;
  Vocabulary vocab;
  DirectionGraph graph;  // supervised directions
  std::vector<ParallelData> train, valid, test;

  const ParallelData* find(const std::vector<ParallelData>& split, int l_src, int l_tgt) const;
};

// Supervised pairs hub<->X for every non-hub X in train/valid; test covers
// every ordered pair including the zero-shot ones. Requires >= 3 languages.
Corpus gen_corpus(const SyntheticSpec& spec);

void save_corpus(const Corpus& corpus, const std::string& dir, bool force = false);
Corpus load_corpus(const std::string& dir);

// token frequency over the train split (all sides), used for bucketing
std::unordered_map<int, long long> train_token_counts(const Corpus& corpus);

// Batches are direction-homogeneous: a direction is drawn with probability
// proportional to size^(1/3), then sentences are packed until the budget.
class BatchSampler {
 public:
  BatchSampler(const std::vector<ParallelData>* directions, int token_budget);

  std::vector<Sample> next(Rng& rng) const;
  int pick_direction(Rng& rng) const;  // exposed for the frequency tests

 private:
  const std::vector<ParallelData>* directions_;
  int token_budget_;
  std::vector<double> weights_;
};

}  // namespace dagnmt
