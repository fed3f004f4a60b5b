#pragma once

// Run configuration: a flat sectioned key=value file, every key with a
// documented default, unknown keys rejected, individual keys overridable
// from the command line.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dagnmt/data.hpp"
#include "dagnmt/model.hpp"
#include "dagnmt/pivotbt.hpp"
#include "dagnmt/train.hpp"

namespace dagnmt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DecodeSettings {
  std::string method = "lookahead";  // lookahead | ngram-beam
  int beam_width = 8;
  int lm_order = 3;
  double lm_addk = 0.1;
  double lm_weight = 0.1;
  double len_alpha = 0.6;
  bool collapse_repeats = true;
};

struct BenchSettings {
  int batch_size = 1;  // anything else is refused
  int warmup = 3;
  int max_sentences = 50;
  int ar_extra_len = 8;
  double ar_min_len_ratio = 1.0;
};

struct PathSettings {
  std::string data_dir = "data";
  std::string out_dir = "run";
};

struct RunConfig {
  ModelConfig model;     // vocab_size / n_languages are derived from the corpus
  TrainConfig train;
  BtPolicy bt;
  SyntheticSpec data;
  DecodeSettings decode;
  BenchSettings bench;
  PathSettings paths;

  // parse a sectioned key=value file; '#' starts a comment
  static RunConfig load(const std::string& path);
  static RunConfig defaults() { return RunConfig{}; }

  // dotted key, e.g. "model.d_model"
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& known_keys();

  // full validation; throws ConfigError before any side effect
  void validate() const;
  void dump(std::ostream& os) const;
};

}  // namespace dagnmt
