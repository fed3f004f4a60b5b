#include "dagnmt/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dagnmt {

// ---------------------------------------------------------------------------
// NgramLM

namespace {
constexpr int kMaxOrder = 4;  // packed 16 bits per local id
}

int NgramLM::local(int token) const {
  auto it = to_local_.find(token);
  return it == to_local_.end() ? local_unk_ : it->second;
}

uint64_t NgramLM::pack(const int* local_ids, int k) const {
  uint64_t key = 0;
  for (int i = 0; i < k; ++i)
    key = (key << 16) | static_cast<uint64_t>(local_ids[i] + 1);
  return key;
}

NgramLM lm_train(const std::vector<std::vector<int>>& corpus, int order, int lang_id,
                 double add_k) {
  if (corpus.empty()) throw std::invalid_argument("lm_train: empty corpus");
  if (order < 1 || order > kMaxOrder)
    throw std::invalid_argument("lm_train: order must be in [1, " + std::to_string(kMaxOrder) +
                                "]");
  if (add_k <= 0.0) throw std::invalid_argument("lm_train: add_k must be positive");

  NgramLM lm;
  lm.order_ = order;
  lm.lang_id_ = lang_id;
  lm.add_k_ = add_k;

  // event space: observed tokens + EOS + UNK (catch-all for unseen tokens)
  std::vector<int> events;
  for (const auto& sent : corpus)
    for (int tok : sent) events.push_back(tok);
  events.push_back(kEos);
  events.push_back(kUnk);
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());
  lm.event_ids_ = events;
  for (size_t i = 0; i < events.size(); ++i) lm.to_local_.emplace(events[i], static_cast<int>(i));
  lm.local_unk_ = lm.to_local_.at(kUnk);

  lm.gram_counts_.assign(static_cast<size_t>(order) + 1, {});
  lm.ctx_counts_.assign(static_cast<size_t>(order) + 1, {});

  // BOS is not an event; it appears only inside padded contexts, as local -1
  for (const auto& sent : corpus) {
    std::vector<int> seq(static_cast<size_t>(order - 1), -1);
    for (int tok : sent) seq.push_back(lm.local(tok));
    seq.push_back(lm.to_local_.at(kEos));
    for (size_t pos = static_cast<size_t>(order - 1); pos < seq.size(); ++pos) {
      ++lm.total_events_;
      for (int k = 1; k <= order; ++k) {
        const int* start = seq.data() + pos - static_cast<size_t>(k - 1);
        ++lm.gram_counts_[static_cast<size_t>(k)][lm.pack(start, k)];
        if (k > 1) ++lm.ctx_counts_[static_cast<size_t>(k)][lm.pack(start, k - 1)];
      }
    }
  }
  return lm;
}

double NgramLM::cond_logp(const std::vector<int>& context, int token) const {
  if (order_ < 1) throw std::runtime_error("ngram lm: not trained");
  const double v = static_cast<double>(event_count());
  const int w = local(token);
  // local context, BOS-padded on the left
  std::vector<int> ctx(static_cast<size_t>(order_ - 1));
  for (int i = 0; i < order_ - 1; ++i) {
    const int back = order_ - 1 - i;
    ctx[static_cast<size_t>(i)] = back <= static_cast<int>(context.size())
                                      ? local(context[context.size() - static_cast<size_t>(back)])
                                      : -1;
  }
  for (int k = order_; k >= 1; --k) {
    if (k == 1) {
      long long c = 0;
      int loc = w;
      auto it = gram_counts_[1].find(pack(&loc, 1));
      if (it != gram_counts_[1].end()) c = it->second;
      return std::log((static_cast<double>(c) + add_k_) /
                      (static_cast<double>(total_events_) + add_k_ * v));
    }
    const int* ctx_start = ctx.data() + (order_ - k);
    auto cit = ctx_counts_[static_cast<size_t>(k)].find(pack(ctx_start, k - 1));
    if (cit == ctx_counts_[static_cast<size_t>(k)].end()) continue;  // back off
    std::vector<int> gram(ctx_start, ctx_start + (k - 1));
    gram.push_back(w);
    long long c = 0;
    auto git = gram_counts_[static_cast<size_t>(k)].find(pack(gram.data(), k));
    if (git != gram_counts_[static_cast<size_t>(k)].end()) c = git->second;
    return std::log((static_cast<double>(c) + add_k_) /
                    (static_cast<double>(cit->second) + add_k_ * v));
  }
  throw std::logic_error("ngram lm: unreachable");
}

double NgramLM::sentence_logp(const std::vector<int>& tokens) const {
  double total = 0.0;
  std::vector<int> context;
  for (int tok : tokens) {
    total += cond_logp(context, tok);
    context.push_back(tok);
  }
  return total;
}

void NgramLM::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("ngram lm: cannot write " + path);
  os << "dagnmt-ngram 1 lang=" << lang_id_ << " order=" << order_ << " addk=" << add_k_
     << " events=" << event_count() << " total=" << total_events_ << "\n";
  for (size_t i = 0; i < event_ids_.size(); ++i)
    os << event_ids_[i] << (i + 1 < event_ids_.size() ? ' ' : '\n');
  for (int k = 1; k <= order_; ++k) {
    for (const auto& [key, count] : gram_counts_[static_cast<size_t>(k)])
      os << "g " << k << " " << key << " " << count << "\n";
    for (const auto& [key, count] : ctx_counts_[static_cast<size_t>(k)])
      os << "c " << k << " " << key << " " << count << "\n";
  }
  if (!os) throw std::runtime_error("ngram lm: write failed for " + path);
}

NgramLM NgramLM::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("ngram lm: cannot open " + path);
  std::string header;
  std::getline(is, header);
  NgramLM lm;
  int events = 0;
  if (sscanf(header.c_str(), "dagnmt-ngram 1 lang=%d order=%d addk=%lf events=%d total=%lld",
             &lm.lang_id_, &lm.order_, &lm.add_k_, &events, &lm.total_events_) != 5)
    throw std::runtime_error("ngram lm: bad header in " + path);
  lm.event_ids_.resize(static_cast<size_t>(events));
  for (int i = 0; i < events; ++i)
    if (!(is >> lm.event_ids_[static_cast<size_t>(i)]))
      throw std::runtime_error("ngram lm: truncated event table in " + path);
  for (size_t i = 0; i < lm.event_ids_.size(); ++i)
    lm.to_local_.emplace(lm.event_ids_[i], static_cast<int>(i));
  lm.local_unk_ = lm.to_local_.at(kUnk);
  lm.gram_counts_.assign(static_cast<size_t>(lm.order_) + 1, {});
  lm.ctx_counts_.assign(static_cast<size_t>(lm.order_) + 1, {});
  std::string kind;
  while (is >> kind) {
    int k;
    uint64_t key;
    long long count;
    if (!(is >> k >> key >> count)) throw std::runtime_error("ngram lm: bad record in " + path);
    if (k < 1 || k > lm.order_) throw std::runtime_error("ngram lm: bad order in " + path);
    if (kind == "g") lm.gram_counts_[static_cast<size_t>(k)][key] = count;
    else if (kind == "c") lm.ctx_counts_[static_cast<size_t>(k)][key] = count;
    else throw std::runtime_error("ngram lm: unknown record '" + kind + "' in " + path);
  }
  return lm;
}

// ---------------------------------------------------------------------------
// postprocess + lookahead

std::vector<int> postprocess(const std::vector<int>& raw, bool collapse_repeats,
                             int special_boundary) {
  std::vector<int> out;
  int prev = -1;
  for (int tok : raw) {
    if (tok == kEos) break;
    if (collapse_repeats && tok == prev) continue;
    prev = tok;
    if (tok < special_boundary) continue;
    out.push_back(tok);
  }
  return out;
}

namespace {

struct RowBest {
  std::vector<int> word;
  std::vector<double> score;
};

// argmax word per step; ties toward the lowest token id by scan order
RowBest best_words(const DagTables& dag) {
  RowBest rb;
  rb.word.resize(static_cast<size_t>(dag.S));
  rb.score.resize(static_cast<size_t>(dag.S));
  for (int s = 0; s < dag.S; ++s) {
    int best = 0;
    double best_v = dag.word_at(s, 0);
    for (int v = 1; v < dag.V; ++v)
      if (dag.word_at(s, v) > best_v) {
        best_v = dag.word_at(s, v);
        best = v;
      }
    rb.word[static_cast<size_t>(s)] = best;
    rb.score[static_cast<size_t>(s)] = best_v;
  }
  return rb;
}

}  // namespace

WalkResult lookahead_walk(const DagTables& dag) {
  const RowBest rb = best_words(dag);
  WalkResult r;
  int s = 0;
  r.steps.push_back(0);
  r.tokens.push_back(rb.word[0]);
  r.dag_score = rb.score[0];
  while (s < dag.S - 1) {
    int next = -1;
    double best_v = -1e300;
    for (int s2 = s + 1; s2 < dag.S; ++s2) {
      const double v = dag.link_at(s, s2) + rb.score[static_cast<size_t>(s2)];
      if (v > best_v) {
        best_v = v;
        next = s2;
      }
    }
    r.dag_score += best_v;
    r.steps.push_back(next);
    r.tokens.push_back(rb.word[static_cast<size_t>(next)]);
    s = next;
  }
  return r;
}

std::vector<int> lookahead_decode(const DagTables& dag, bool collapse_repeats,
                                  int special_boundary) {
  return postprocess(lookahead_walk(dag).tokens, collapse_repeats, special_boundary);
}

// ---------------------------------------------------------------------------
// n-gram beam search

namespace {

struct Hyp {
  int step = 0;
  double dag_score = 0.0;
  std::vector<int> tokens;
};

}  // namespace

BeamResult ngram_beam_search_full(const DagTables& dag, const NgramLM& lm,
                                  const BeamOptions& opts) {
  if (opts.beam_width < 1) throw std::invalid_argument("beam search: beam_width must be >= 1");
  const int S = dag.S;
  const int top_words = std::min(opts.beam_width, dag.V);

  // per step: top words by score (candidate expansion set)
  std::vector<std::vector<std::pair<double, int>>> row_top(static_cast<size_t>(S));
  for (int s = 0; s < S; ++s) {
    std::vector<std::pair<double, int>> all;
    all.reserve(static_cast<size_t>(dag.V));
    for (int v = 0; v < dag.V; ++v) all.emplace_back(dag.word_at(s, v), -v);
    std::partial_sort(all.begin(), all.begin() + top_words, all.end(),
                      std::greater<std::pair<double, int>>());
    all.resize(static_cast<size_t>(top_words));
    row_top[static_cast<size_t>(s)] = std::move(all);
  }

  std::vector<Hyp> finished;
  std::vector<Hyp> frontier;
  for (const auto& [score, neg_v] : row_top[0]) {
    Hyp h;
    h.step = 0;
    h.dag_score = score;
    h.tokens = {-neg_v};
    frontier.push_back(std::move(h));
  }
  if (static_cast<int>(frontier.size()) > opts.beam_width) frontier.resize(opts.beam_width);

  // deterministic ordering: score desc, then earlier step, then lower tokens
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.dag_score != b.dag_score) return a.dag_score > b.dag_score;
    if (a.step != b.step) return a.step < b.step;
    return a.tokens < b.tokens;
  };
  while (!frontier.empty()) {
    std::vector<Hyp> expanded;
    for (const Hyp& h : frontier) {
      for (int s2 = h.step + 1; s2 < S; ++s2) {
        const double link = dag.link_at(h.step, s2);
        for (const auto& [wscore, neg_v] : row_top[static_cast<size_t>(s2)]) {
          Hyp nh;
          nh.step = s2;
          nh.dag_score = h.dag_score + link + wscore;
          nh.tokens = h.tokens;
          nh.tokens.push_back(-neg_v);
          expanded.push_back(std::move(nh));
        }
      }
    }
    // finished hypotheses compete for beam slots, then retire to the pool
    std::sort(expanded.begin(), expanded.end(), better);
    if (static_cast<int>(expanded.size()) > opts.beam_width) expanded.resize(opts.beam_width);
    frontier.clear();
    for (Hyp& h : expanded) {
      if (h.step == S - 1) finished.push_back(std::move(h));
      else frontier.push_back(std::move(h));
    }
  }

  // the greedy walk is always a candidate
  {
    WalkResult walk = lookahead_walk(dag);
    Hyp h;
    h.step = S - 1;
    h.dag_score = walk.dag_score;
    h.tokens = std::move(walk.tokens);
    finished.push_back(std::move(h));
  }

  BeamResult result;
  result.n_candidates = static_cast<int>(finished.size());
  result.best_dag_score = -1e300;
  double best_rank = -1e300;
  for (const Hyp& h : finished) {
    result.best_dag_score = std::max(result.best_dag_score, h.dag_score);
    std::vector<int> clean = postprocess(h.tokens, opts.collapse_repeats, opts.special_boundary);
    const double len = static_cast<double>(std::max<size_t>(clean.size(), 1));
    double rank = h.dag_score / std::pow(len, opts.len_alpha);
    if (opts.lm_weight != 0.0) rank += opts.lm_weight * lm.sentence_logp(clean) / len;
    if (rank > best_rank) {
      best_rank = rank;
      result.tokens = std::move(clean);
      result.chosen_dag_score = h.dag_score;
    }
  }
  return result;
}

std::vector<int> ngram_beam_search(const DagTables& dag, const NgramLM& lm,
                                   const BeamOptions& opts) {
  return ngram_beam_search_full(dag, lm, opts).tokens;
}

}  // namespace dagnmt
