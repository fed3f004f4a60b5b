#include "dagnmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace fs = std::filesystem;

namespace dagnmt {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::build(int n_languages, const std::vector<std::string>& words) {
  Vocabulary v;
  v.n_languages_ = n_languages;
  v.id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int l = 0; l < n_languages; ++l) v.id_to_token_.push_back("<l" + std::to_string(l) + ">");
  for (const std::string& w : words) v.id_to_token_.push_back(w);
  for (size_t i = 0; i < v.id_to_token_.size(); ++i) {
    auto [it, inserted] = v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i));
    if (!inserted)
      throw std::invalid_argument("vocabulary: duplicate token '" + v.id_to_token_[i] + "'");
  }
  return v;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw std::invalid_argument("vocabulary: id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

int Vocabulary::id_or_unk(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& line) const {
  std::vector<int> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(id_or_unk(tok));
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("vocabulary: cannot write " + path);
  os << "dagnmt-vocab 1 languages=" << n_languages_ << "\n";
  for (const std::string& tok : id_to_token_) os << tok << "\n";
  if (!os) throw std::runtime_error("vocabulary: write failed for " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("vocabulary: cannot open " + path);
  std::string header;
  std::getline(is, header);
  int langs = -1;
  if (sscanf(header.c_str(), "dagnmt-vocab 1 languages=%d", &langs) != 1 || langs < 0)
    throw std::runtime_error("vocabulary: bad header in " + path);
  Vocabulary v;
  v.n_languages_ = langs;
  std::string tok;
  while (std::getline(is, tok)) {
    if (tok.empty()) continue;
    v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(tok);
  }
  if (v.size() < kNumSpecials + langs)
    throw std::runtime_error("vocabulary: truncated file " + path);
  return v;
}

// ---------------------------------------------------------------------------
// Sample / DirectionGraph

void Sample::validate() const {
  if (l_src == l_tgt)
    throw std::invalid_argument("sample: source and target language must differ");
  if (l_src < 0 || l_tgt < 0) throw std::invalid_argument("sample: language ids unset");
  if (x.empty()) throw std::invalid_argument("sample: empty source");
  if (y.empty()) throw std::invalid_argument("sample: empty target");
}

DirectionGraph::DirectionGraph(int n_languages, int hub) : n_(n_languages), hub_(hub) {
  if (n_ < 1) throw std::invalid_argument("direction graph: need at least one language");
  if (hub_ < 0 || hub_ >= n_) throw std::invalid_argument("direction graph: hub out of range");
  adj_.assign(static_cast<size_t>(n_) * n_, 0);
}

void DirectionGraph::add(int l_src, int l_tgt) {
  if (l_src < 0 || l_src >= n_ || l_tgt < 0 || l_tgt >= n_)
    throw std::invalid_argument("direction graph: language out of range");
  adj_[static_cast<size_t>(l_src) * n_ + l_tgt] = 1;
}

bool DirectionGraph::has(int l_src, int l_tgt) const {
  if (l_src < 0 || l_src >= n_ || l_tgt < 0 || l_tgt >= n_) return false;
  return adj_[static_cast<size_t>(l_src) * n_ + l_tgt] != 0;
}

std::vector<std::pair<int, int>> DirectionGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b)
      if (has(a, b)) out.emplace_back(a, b);
  return out;
}

// ---------------------------------------------------------------------------
// SyntheticSpec / OracleTranslator

LangRule parse_lang_rule(const std::string& text) {
  if (text == "identity") return {OrderRule::Identity, 0};
  if (text == "reverse") return {OrderRule::Reverse, 0};
  if (text.rfind("rotate", 0) == 0) {
    const std::string rest = text.substr(6);
    if (rest.empty() || rest[0] != ':')
      throw std::invalid_argument("order rule: expected rotate:<k>, got '" + text + "'");
    return {OrderRule::Rotate, std::stoi(rest.substr(1))};
  }
  throw std::invalid_argument("order rule: unknown rule '" + text + "'");
}

std::string lang_rule_str(const LangRule& r) {
  switch (r.rule) {
    case OrderRule::Identity: return "identity";
    case OrderRule::Reverse: return "reverse";
    case OrderRule::Rotate: return "rotate:" + std::to_string(r.amount);
  }
  return "identity";
}

void SyntheticSpec::validate() const {
  if (n_languages < 3)
    throw std::invalid_argument("synthetic spec: need >= 3 languages for zero-shot directions");
  if (n_languages > 26) throw std::invalid_argument("synthetic spec: at most 26 languages");
  if (hub < 0 || hub >= n_languages)
    throw std::invalid_argument("synthetic spec: hub out of range");
  if (concept_vocab < 2) throw std::invalid_argument("synthetic spec: concept vocabulary too small");
  if (min_len < 1 || max_len < min_len)
    throw std::invalid_argument("synthetic spec: bad length range");
  if (!order_rules.empty() && static_cast<int>(order_rules.size()) != n_languages)
    throw std::invalid_argument("synthetic spec: need one order rule per language");
  if (train_per_direction < 1 || valid_per_direction < 1 || test_per_direction < 1)
    throw std::invalid_argument("synthetic spec: split sizes must be positive");
  if (zipf_exponent < 0.0) throw std::invalid_argument("synthetic spec: negative zipf exponent");
}

LangRule SyntheticSpec::rule_for(int lang) const {
  if (order_rules.empty()) return {OrderRule::Identity, 0};
  return order_rules[static_cast<size_t>(lang)];
}

namespace {

std::string surface_word(int lang, int word_index) {
  std::string s(1, static_cast<char>('a' + lang));
  s += std::to_string(word_index / 10);
  s += std::to_string(word_index % 10);
  return s;
}

std::vector<int> apply_order(const std::vector<int>& s, const LangRule& r, bool inverse) {
  const int n = static_cast<int>(s.size());
  if (n == 0 || r.rule == OrderRule::Identity) return s;
  std::vector<int> out(static_cast<size_t>(n));
  if (r.rule == OrderRule::Reverse) {
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = s[static_cast<size_t>(n - 1 - i)];
    return out;
  }
  const int k = ((inverse ? -r.amount : r.amount) % n + n) % n;
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = s[static_cast<size_t>((i + k) % n)];
  return out;
}

}  // namespace

OracleTranslator::OracleTranslator(const SyntheticSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng rng(spec_.seed ^ 0xc1f3a5u);
  const int c = spec_.concept_vocab;
  cipher_.resize(static_cast<size_t>(spec_.n_languages));
  cipher_inv_.resize(static_cast<size_t>(spec_.n_languages));
  for (int l = 0; l < spec_.n_languages; ++l) {
    std::vector<int> perm(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) perm[static_cast<size_t>(i)] = i;
    rng.shuffle(perm);
    cipher_[static_cast<size_t>(l)] = perm;
    std::vector<int> inv(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) inv[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
    cipher_inv_[static_cast<size_t>(l)] = inv;
  }
}

int OracleTranslator::word_base(int lang) const {
  return kNumSpecials + spec_.n_languages + lang * spec_.concept_vocab;
}

bool OracleTranslator::is_word_of(int token, int lang) const {
  const int base = word_base(lang);
  return token >= base && token < base + spec_.concept_vocab;
}

std::vector<int> OracleTranslator::to_concepts(const std::vector<int>& tokens, int lang) const {
  std::vector<int> concepts;
  concepts.reserve(tokens.size());
  const int base = word_base(lang);
  for (int tok : tokens) {
    if (!is_word_of(tok, lang))
      throw std::invalid_argument("oracle: token " + std::to_string(tok) +
                                  " is not a word of language " + std::to_string(lang));
    concepts.push_back(cipher_inv_[static_cast<size_t>(lang)][static_cast<size_t>(tok - base)]);
  }
  return apply_order(concepts, spec_.rule_for(lang), /*inverse=*/true);
}

std::vector<int> OracleTranslator::from_concepts(const std::vector<int>& concepts,
                                                 int lang) const {
  std::vector<int> ordered = apply_order(concepts, spec_.rule_for(lang), /*inverse=*/false);
  std::vector<int> out;
  out.reserve(ordered.size());
  const int base = word_base(lang);
  for (int concept_id : ordered)
    out.push_back(base + cipher_[static_cast<size_t>(lang)][static_cast<size_t>(concept_id)]);
  return out;
}

std::vector<int> OracleTranslator::translate(const std::vector<int>& tokens, int from,
                                             int to) const {
  return from_concepts(to_concepts(tokens, from), to);
}

int OracleTranslator::translate_token(int token, int from, int to) const {
  if (!is_word_of(token, from))
    throw std::invalid_argument("oracle lexicon: token " + std::to_string(token) +
                                " is not a word of language " + std::to_string(from));
  const int concept_id = cipher_inv_[static_cast<size_t>(from)][static_cast<size_t>(token - word_base(from))];
  return word_base(to) + cipher_[static_cast<size_t>(to)][static_cast<size_t>(concept_id)];
}

// ---------------------------------------------------------------------------
// corpus generation

Sample ParallelData::sample(size_t i) const {
  Sample s;
  s.x = src[i];
  s.l_src = l_src;
  s.y = tgt[i];
  s.y.push_back(kEos);
  s.l_tgt = l_tgt;
  s.corpus_index = i;
  s.validate();
  return s;
}

const ParallelData* Corpus::find(const std::vector<ParallelData>& split, int l_src,
                                 int l_tgt) const {
  for (const ParallelData& d : split)
    if (d.l_src == l_src && d.l_tgt == l_tgt) return &d;
  return nullptr;
}

namespace {

std::vector<int> draw_concepts(const SyntheticSpec& spec, Rng& rng,
                               const std::vector<double>& zipf_weights) {
  const int len = rng.uniform_int(spec.min_len, spec.max_len);
  std::vector<int> s;
  s.reserve(static_cast<size_t>(len));
  // no cyclically-adjacent repeats: reversal and rotation rules then never
  // produce adjacent duplicates, which decode-time collapsing would destroy
  const bool dedup = spec.concept_vocab >= 3;
  for (int i = 0; i < len; ++i) {
    int c = static_cast<int>(rng.categorical(zipf_weights));
    if (dedup && len > 1) {
      while ((i > 0 && c == s[static_cast<size_t>(i - 1)]) ||
             (i == len - 1 && c == s[0]))
        c = static_cast<int>(rng.categorical(zipf_weights));
    }
    s.push_back(c);
  }
  return s;
}

ParallelData make_direction(const SyntheticSpec& spec, const OracleTranslator& oracle, int a,
                            int b, int count, Rng& rng, const std::vector<double>& zipf_weights) {
  ParallelData d;
  d.l_src = a;
  d.l_tgt = b;
  d.src.reserve(static_cast<size_t>(count));
  d.tgt.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::vector<int> concepts = draw_concepts(spec, rng, zipf_weights);
    d.src.push_back(oracle.from_concepts(concepts, a));
    d.tgt.push_back(oracle.from_concepts(concepts, b));
  }
  return d;
}

}  // namespace

Corpus gen_corpus(const SyntheticSpec& spec) {
  spec.validate();
  const int L = spec.n_languages;
  const int C = spec.concept_vocab;

  std::vector<std::string> words;
  words.reserve(static_cast<size_t>(L) * C);
  for (int l = 0; l < L; ++l)
    for (int j = 0; j < C; ++j) words.push_back(surface_word(l, j));

  Corpus corpus;
  corpus.spec = spec;
  corpus.vocab = Vocabulary::build(L, words);  // rejects cipher collisions via duplicates
  corpus.graph = DirectionGraph(L, spec.hub);

  OracleTranslator oracle(spec);
  std::vector<double> zipf(static_cast<size_t>(C));
  for (int k = 0; k < C; ++k) zipf[static_cast<size_t>(k)] = 1.0 / std::pow(k + 1, spec.zipf_exponent);

  Rng rng(spec.seed);
  std::vector<std::pair<int, int>> supervised;
  for (int x = 0; x < L; ++x) {
    if (x == spec.hub) continue;
    supervised.emplace_back(spec.hub, x);
    supervised.emplace_back(x, spec.hub);
  }
  for (auto [a, b] : supervised) {
    corpus.graph.add(a, b);
    corpus.train.push_back(
        make_direction(spec, oracle, a, b, spec.train_per_direction, rng, zipf));
  }
  for (auto [a, b] : supervised)
    corpus.valid.push_back(
        make_direction(spec, oracle, a, b, spec.valid_per_direction, rng, zipf));
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b) {
      if (a == b) continue;
      corpus.test.push_back(
          make_direction(spec, oracle, a, b, spec.test_per_direction, rng, zipf));
    }
  return corpus;
}

// ---------------------------------------------------------------------------
// corpus files

namespace {

std::string lang_name(int l) { return "l" + std::to_string(l); }

int parse_lang_name(const std::string& s) {
  if (s.size() < 2 || s[0] != 'l') throw std::runtime_error("bad language name '" + s + "'");
  return std::stoi(s.substr(1));
}

std::string pair_stem(const std::string& split, int a, int b) {
  return split + "." + lang_name(a) + "-" + lang_name(b);
}

void write_side(const fs::path& dir, const std::string& stem, const std::string& lang,
                const Vocabulary& vocab, const std::vector<std::vector<int>>& sents) {
  std::ofstream os(dir / (stem + "." + lang), std::ios::trunc);
  if (!os) throw std::runtime_error("corpus: cannot write " + (dir / stem).string());
  for (const auto& s : sents) os << vocab.decode(s) << "\n";
}

std::vector<std::vector<int>> read_side(const fs::path& path, const Vocabulary& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("corpus: cannot open " + path.string());
  std::vector<std::vector<int>> out;
  std::string line;
  while (std::getline(is, line)) out.push_back(vocab.encode(line));
  return out;
}

void save_split(const fs::path& dir, const std::string& split, const Vocabulary& vocab,
                const std::vector<ParallelData>& data, std::ofstream& manifest) {
  for (const ParallelData& d : data) {
    const std::string stem = pair_stem(split, d.l_src, d.l_tgt);
    write_side(dir, stem, lang_name(d.l_src), vocab, d.src);
    write_side(dir, stem, lang_name(d.l_tgt), vocab, d.tgt);
    manifest << "direction " << split << " " << lang_name(d.l_src) << " " << lang_name(d.l_tgt)
             << " " << d.size() << "\n";
  }
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& dir, bool force) {
  fs::path root(dir);
  if (fs::exists(root) && !fs::is_empty(root) && !force)
    throw std::runtime_error("corpus: output directory " + dir +
                             " is not empty (use force to overwrite)");
  fs::create_directories(root);
  corpus.vocab.save((root / "vocab.txt").string());

  std::ofstream manifest(root / "manifest.txt", std::ios::trunc);
  if (!manifest) throw std::runtime_error("corpus: cannot write manifest in " + dir);
  const SyntheticSpec& s = corpus.spec;
  manifest << "dagnmt-corpus 1\n";
  manifest << "languages " << s.n_languages << "\n";
  manifest << "hub " << lang_name(s.hub) << "\n";
  manifest << "concept_vocab " << s.concept_vocab << "\n";
  manifest << "min_len " << s.min_len << "\n";
  manifest << "max_len " << s.max_len << "\n";
  manifest << "train_per_direction " << s.train_per_direction << "\n";
  manifest << "valid_per_direction " << s.valid_per_direction << "\n";
  manifest << "test_per_direction " << s.test_per_direction << "\n";
  manifest << "zipf_exponent " << s.zipf_exponent << "\n";
  manifest << "seed " << s.seed << "\n";
  manifest << "order_rules";
  for (int l = 0; l < s.n_languages; ++l) manifest << " " << lang_rule_str(s.rule_for(l));
  manifest << "\n";
  save_split(root, "train", corpus.vocab, corpus.train, manifest);
  save_split(root, "valid", corpus.vocab, corpus.valid, manifest);
  save_split(root, "test", corpus.vocab, corpus.test, manifest);
  if (!manifest) throw std::runtime_error("corpus: manifest write failed in " + dir);
}

Corpus load_corpus(const std::string& dir) {
  fs::path root(dir);
  std::ifstream manifest(root / "manifest.txt");
  if (!manifest) throw std::runtime_error("corpus: cannot open manifest in " + dir);
  std::string line;
  std::getline(manifest, line);
  if (line != "dagnmt-corpus 1")
    throw std::runtime_error("corpus: unsupported manifest header in " + dir);

  Corpus corpus;
  SyntheticSpec& s = corpus.spec;
  std::vector<std::tuple<std::string, int, int, size_t>> directions;
  while (std::getline(manifest, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key.empty()) continue;
    if (key == "languages") ss >> s.n_languages;
    else if (key == "hub") {
      std::string h;
      ss >> h;
      s.hub = parse_lang_name(h);
    } else if (key == "concept_vocab") ss >> s.concept_vocab;
    else if (key == "min_len") ss >> s.min_len;
    else if (key == "max_len") ss >> s.max_len;
    else if (key == "train_per_direction") ss >> s.train_per_direction;
    else if (key == "valid_per_direction") ss >> s.valid_per_direction;
    else if (key == "test_per_direction") ss >> s.test_per_direction;
    else if (key == "zipf_exponent") ss >> s.zipf_exponent;
    else if (key == "seed") ss >> s.seed;
    else if (key == "order_rules") {
      std::string r;
      while (ss >> r) s.order_rules.push_back(parse_lang_rule(r));
    } else if (key == "direction") {
      std::string split, a, b;
      size_t n = 0;
      ss >> split >> a >> b >> n;
      directions.emplace_back(split, parse_lang_name(a), parse_lang_name(b), n);
    } else {
      throw std::runtime_error("corpus: unknown manifest key '" + key + "' in " + dir);
    }
  }
  s.validate();
  corpus.vocab = Vocabulary::load((root / "vocab.txt").string());
  corpus.graph = DirectionGraph(s.n_languages, s.hub);

  for (const auto& [split, a, b, n] : directions) {
    ParallelData d;
    d.l_src = a;
    d.l_tgt = b;
    const std::string stem = pair_stem(split, a, b);
    d.src = read_side(root / (stem + "." + lang_name(a)), corpus.vocab);
    d.tgt = read_side(root / (stem + "." + lang_name(b)), corpus.vocab);
    if (d.src.size() != n || d.tgt.size() != n)
      throw std::runtime_error("corpus: size mismatch for " + stem);
    if (split == "train") {
      corpus.graph.add(a, b);
      corpus.train.push_back(std::move(d));
    } else if (split == "valid") {
      corpus.valid.push_back(std::move(d));
    } else if (split == "test") {
      corpus.test.push_back(std::move(d));
    } else {
      throw std::runtime_error("corpus: unknown split '" + split + "'");
    }
  }
  return corpus;
}

std::unordered_map<int, long long> train_token_counts(const Corpus& corpus) {
  std::unordered_map<int, long long> counts;
  for (const ParallelData& d : corpus.train) {
    for (const auto& s : d.src)
      for (int tok : s) ++counts[tok];
    for (const auto& s : d.tgt)
      for (int tok : s) ++counts[tok];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// batching

BatchSampler::BatchSampler(const std::vector<ParallelData>* directions, int token_budget)
    : directions_(directions), token_budget_(token_budget) {
  if (directions_ == nullptr || directions_->empty())
    throw std::invalid_argument("batch sampler: no directions");
  int longest = 0;
  for (const ParallelData& d : *directions_) {
    if (d.size() == 0) throw std::invalid_argument("batch sampler: empty direction dataset");
    for (size_t i = 0; i < d.size(); ++i) {
      const int cost = static_cast<int>(std::max(d.src[i].size() + 1, d.tgt[i].size() + 1));
      longest = std::max(longest, cost);
    }
    weights_.push_back(std::cbrt(static_cast<double>(d.size())));
  }
  if (token_budget_ < longest)
    throw std::invalid_argument("batch sampler: token budget " + std::to_string(token_budget_) +
                                " below longest sentence cost " + std::to_string(longest));
}

int BatchSampler::pick_direction(Rng& rng) const {
  return static_cast<int>(rng.categorical(weights_));
}

std::vector<Sample> BatchSampler::next(Rng& rng) const {
  const ParallelData& d = (*directions_)[static_cast<size_t>(pick_direction(rng))];
  std::vector<Sample> batch;
  int used = 0;
  while (true) {
    const size_t i = rng.uniform_u64(d.size());
    Sample s = d.sample(i);
    const int cost = static_cast<int>(std::max(s.x.size() + 1, s.y.size()));
    if (used + cost > token_budget_ && !batch.empty()) break;
    batch.push_back(std::move(s));
    used += cost;
    if (used >= token_budget_) break;
  }
  return batch;
}

}  // namespace dagnmt
