#include "dagnmt/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

namespace dagnmt {

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

std::vector<LangRule> to_rules(const std::string& key, const std::string& v) {
  std::vector<LangRule> rules;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      rules.push_back(parse_lang_rule(item));
    } catch (const std::exception& e) {
      throw ConfigError("config: " + key + ": " + e.what());
    }
  }
  return rules;
}

std::string rules_str(const std::vector<LangRule>& rules) {
  std::string out;
  for (size_t i = 0; i < rules.size(); ++i) {
    if (i) out += ",";
    out += lang_rule_str(rules[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& v) {
  // model
  if (key == "model.d_model") model.d_model = to_int(key, v);
  else if (key == "model.n_heads") model.n_heads = to_int(key, v);
  else if (key == "model.n_enc_layers") model.n_enc_layers = to_int(key, v);
  else if (key == "model.n_dec_layers") model.n_dec_layers = to_int(key, v);
  else if (key == "model.ffn_width") model.ffn_width = to_int(key, v);
  else if (key == "model.max_positions") model.max_positions = to_int(key, v);
  else if (key == "model.upsample_factor") model.upsample_factor = to_double(key, v);
  else if (key == "model.dropout") model.dropout = to_double(key, v);
  else if (key == "model.seed") model.seed = to_u64(key, v);
  // train
  else if (key == "train.peak_lr") train.peak_lr = to_double(key, v);
  else if (key == "train.warmup_updates") train.warmup_updates = to_int(key, v);
  else if (key == "train.total_updates") train.total_updates = to_int(key, v);
  else if (key == "train.adam_beta1") train.adam_beta1 = to_double(key, v);
  else if (key == "train.adam_beta2") train.adam_beta2 = to_double(key, v);
  else if (key == "train.adam_eps") train.adam_eps = to_double(key, v);
  else if (key == "train.token_budget") train.token_budget = to_int(key, v);
  else if (key == "train.seed") train.seed = to_u64(key, v);
  else if (key == "train.checkpoint_interval") train.checkpoint_interval = to_int(key, v);
  else if (key == "train.keep_best") train.keep_best = to_int(key, v);
  else if (key == "train.threads") train.threads = to_int(key, v);
  else if (key == "train.clip_norm") train.clip_norm = to_double(key, v);
  else if (key == "train.log_every") train.log_every = to_int(key, v);
  // bt
  else if (key == "bt.mode") {
    try {
      bt.mode = parse_bt_mode(v);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  } else if (key == "bt.lambda") bt.lambda = to_double(key, v);
  else if (key == "bt.warmup_frac") bt.warmup_frac = to_double(key, v);
  else if (key == "bt.decode") {
    if (v == "lookahead") bt.decode = BtDecode::Lookahead;
    else if (v == "ngram-beam") bt.decode = BtDecode::NgramBeam;
    else throw ConfigError("config: bt.decode expects lookahead|ngram-beam, got '" + v + "'");
  }
  // data
  else if (key == "data.languages") data.n_languages = to_int(key, v);
  else if (key == "data.concept_vocab") data.concept_vocab = to_int(key, v);
  else if (key == "data.hub") data.hub = to_int(key, v);
  else if (key == "data.order_rules") data.order_rules = to_rules(key, v);
  else if (key == "data.min_len") data.min_len = to_int(key, v);
  else if (key == "data.max_len") data.max_len = to_int(key, v);
  else if (key == "data.train_per_direction") data.train_per_direction = to_int(key, v);
  else if (key == "data.valid_per_direction") data.valid_per_direction = to_int(key, v);
  else if (key == "data.test_per_direction") data.test_per_direction = to_int(key, v);
  else if (key == "data.zipf_exponent") data.zipf_exponent = to_double(key, v);
  else if (key == "data.seed") data.seed = to_u64(key, v);
  // decode
  else if (key == "decode.method") {
    if (v != "lookahead" && v != "ngram-beam")
      throw ConfigError("config: decode.method expects lookahead|ngram-beam, got '" + v + "'");
    decode.method = v;
  } else if (key == "decode.beam_width") decode.beam_width = to_int(key, v);
  else if (key == "decode.lm_order") decode.lm_order = to_int(key, v);
  else if (key == "decode.lm_addk") decode.lm_addk = to_double(key, v);
  else if (key == "decode.lm_weight") decode.lm_weight = to_double(key, v);
  else if (key == "decode.len_alpha") decode.len_alpha = to_double(key, v);
  else if (key == "decode.collapse_repeats") decode.collapse_repeats = to_bool(key, v);
  // bench
  else if (key == "bench.batch_size") bench.batch_size = to_int(key, v);
  else if (key == "bench.warmup") bench.warmup = to_int(key, v);
  else if (key == "bench.max_sentences") bench.max_sentences = to_int(key, v);
  else if (key == "bench.ar_extra_len") bench.ar_extra_len = to_int(key, v);
  else if (key == "bench.ar_min_len_ratio") bench.ar_min_len_ratio = to_double(key, v);
  // paths
  else if (key == "paths.data_dir") paths.data_dir = v;
  else if (key == "paths.out_dir") paths.out_dir = v;
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  std::ostringstream os;
  if (key == "model.d_model") os << model.d_model;
  else if (key == "model.n_heads") os << model.n_heads;
  else if (key == "model.n_enc_layers") os << model.n_enc_layers;
  else if (key == "model.n_dec_layers") os << model.n_dec_layers;
  else if (key == "model.ffn_width") os << model.ffn_width;
  else if (key == "model.max_positions") os << model.max_positions;
  else if (key == "model.upsample_factor") os << model.upsample_factor;
  else if (key == "model.dropout") os << model.dropout;
  else if (key == "model.seed") os << model.seed;
  else if (key == "train.peak_lr") os << train.peak_lr;
  else if (key == "train.warmup_updates") os << train.warmup_updates;
  else if (key == "train.total_updates") os << train.total_updates;
  else if (key == "train.adam_beta1") os << train.adam_beta1;
  else if (key == "train.adam_beta2") os << train.adam_beta2;
  else if (key == "train.adam_eps") os << train.adam_eps;
  else if (key == "train.token_budget") os << train.token_budget;
  else if (key == "train.seed") os << train.seed;
  else if (key == "train.checkpoint_interval") os << train.checkpoint_interval;
  else if (key == "train.keep_best") os << train.keep_best;
  else if (key == "train.threads") os << train.threads;
  else if (key == "train.clip_norm") os << train.clip_norm;
  else if (key == "train.log_every") os << train.log_every;
  else if (key == "bt.mode") os << bt_mode_str(bt.mode);
  else if (key == "bt.lambda") os << bt.lambda;
  else if (key == "bt.warmup_frac") os << bt.warmup_frac;
  else if (key == "bt.decode") os << (bt.decode == BtDecode::Lookahead ? "lookahead" : "ngram-beam");
  else if (key == "data.languages") os << data.n_languages;
  else if (key == "data.concept_vocab") os << data.concept_vocab;
  else if (key == "data.hub") os << data.hub;
  else if (key == "data.order_rules") os << rules_str(data.order_rules);
  else if (key == "data.min_len") os << data.min_len;
  else if (key == "data.max_len") os << data.max_len;
  else if (key == "data.train_per_direction") os << data.train_per_direction;
  else if (key == "data.valid_per_direction") os << data.valid_per_direction;
  else if (key == "data.test_per_direction") os << data.test_per_direction;
  else if (key == "data.zipf_exponent") os << data.zipf_exponent;
  else if (key == "data.seed") os << data.seed;
  else if (key == "decode.method") os << decode.method;
  else if (key == "decode.beam_width") os << decode.beam_width;
  else if (key == "decode.lm_order") os << decode.lm_order;
  else if (key == "decode.lm_addk") os << decode.lm_addk;
  else if (key == "decode.lm_weight") os << decode.lm_weight;
  else if (key == "decode.len_alpha") os << decode.len_alpha;
  else if (key == "decode.collapse_repeats") os << (decode.collapse_repeats ? "true" : "false");
  else if (key == "bench.batch_size") os << bench.batch_size;
  else if (key == "bench.warmup") os << bench.warmup;
  else if (key == "bench.max_sentences") os << bench.max_sentences;
  else if (key == "bench.ar_extra_len") os << bench.ar_extra_len;
  else if (key == "bench.ar_min_len_ratio") os << bench.ar_min_len_ratio;
  else if (key == "paths.data_dir") os << paths.data_dir;
  else if (key == "paths.out_dir") os << paths.out_dir;
  else throw ConfigError("config: unknown key '" + key + "'");
  return os.str();
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "model.d_model", "model.n_heads", "model.n_enc_layers", "model.n_dec_layers",
      "model.ffn_width", "model.max_positions", "model.upsample_factor", "model.dropout",
      "model.seed",
      "train.peak_lr", "train.warmup_updates", "train.total_updates", "train.adam_beta1",
      "train.adam_beta2", "train.adam_eps", "train.token_budget", "train.seed",
      "train.checkpoint_interval", "train.keep_best", "train.threads", "train.clip_norm",
      "train.log_every",
      "bt.mode", "bt.lambda", "bt.warmup_frac", "bt.decode",
      "data.languages", "data.concept_vocab", "data.hub", "data.order_rules", "data.min_len",
      "data.max_len", "data.train_per_direction", "data.valid_per_direction",
      "data.test_per_direction", "data.zipf_exponent", "data.seed",
      "decode.method", "decode.beam_width", "decode.lm_order", "decode.lm_addk",
      "decode.lm_weight", "decode.len_alpha", "decode.collapse_repeats",
      "bench.batch_size", "bench.warmup", "bench.max_sentences", "bench.ar_extra_len",
      "bench.ar_min_len_ratio",
      "paths.data_dir", "paths.out_dir",
  };
  return keys;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  RunConfig cfg;
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + ":" + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config: " + path + ":" + std::to_string(line_no) +
                        ": key outside a [section]");
    cfg.set(section + "." + key, value);
  }
  return cfg;
}

void RunConfig::validate() const {
  try {
    // vocab size and language count are stand-ins until a corpus is attached
    ModelConfig probe = model;
    probe.vocab_size = kNumSpecials + data.n_languages + data.concept_vocab * data.n_languages;
    probe.n_languages = data.n_languages;
    probe.validate();
    train.validate();
    bt.validate();
    data.validate();
    if (decode.beam_width < 1) throw std::invalid_argument("decode.beam_width must be >= 1");
    if (decode.lm_order < 1 || decode.lm_order > 4)
      throw std::invalid_argument("decode.lm_order must be in [1, 4]");
    if (decode.lm_addk <= 0.0) throw std::invalid_argument("decode.lm_addk must be positive");
    if (bench.warmup < 0 || bench.max_sentences < 1)
      throw std::invalid_argument("bench sizes must be positive");
    if (paths.data_dir.empty() || paths.out_dir.empty())
      throw std::invalid_argument("paths must be non-empty");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void RunConfig::dump(std::ostream& os) const {
  std::string section;
  for (const std::string& key : known_keys()) {
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << key.substr(key.find('.') + 1) << " = " << get(key) << "\n";
  }
}

}  // namespace dagnmt
