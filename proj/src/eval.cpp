#include "dagnmt/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace dagnmt {

// ---------------------------------------------------------------------------
// BLEU

namespace {

// packs up to 4 token ids (16 bits each); distinct n included to separate orders
uint64_t ngram_key(const std::vector<int>& s, size_t start, int n) {
  uint64_t key = static_cast<uint64_t>(n);
  for (int i = 0; i < n; ++i)
    key = (key << 16) | (static_cast<uint64_t>(s[start + static_cast<size_t>(i)]) + 1);
  return key;
}

}  // namespace

BleuResult bleu(const std::vector<std::vector<int>>& hyps,
                const std::vector<std::vector<int>>& refs) {
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (hyps.size() != refs.size())
    throw std::invalid_argument("bleu: hypothesis/reference counts differ");

  std::array<long long, 4> matched{};
  std::array<long long, 4> total{};
  long long hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    const auto& h = hyps[i];
    const auto& r = refs[i];
    hyp_len += static_cast<long long>(h.size());
    ref_len += static_cast<long long>(r.size());
    for (int n = 1; n <= 4; ++n) {
      if (static_cast<int>(r.size()) >= n || static_cast<int>(h.size()) >= n) {
        std::unordered_map<uint64_t, long long> ref_counts;
        for (size_t j = 0; j + static_cast<size_t>(n) <= r.size(); ++j)
          ++ref_counts[ngram_key(r, j, n)];
        std::unordered_map<uint64_t, long long> hyp_counts;
        for (size_t j = 0; j + static_cast<size_t>(n) <= h.size(); ++j)
          ++hyp_counts[ngram_key(h, j, n)];
        for (const auto& [key, count] : hyp_counts) {
          total[static_cast<size_t>(n - 1)] += count;
          auto it = ref_counts.find(key);
          if (it != ref_counts.end())
            matched[static_cast<size_t>(n - 1)] += std::min(count, it->second);
        }
      }
    }
  }

  BleuResult result;
  result.hyp_len = hyp_len;
  result.ref_len = ref_len;
  if (hyp_len == 0) return result;  // empty output scores zero
  result.brevity_penalty =
      hyp_len >= ref_len ? 1.0
                         : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  double log_prec_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    const double p = total[static_cast<size_t>(n)] > 0
                         ? static_cast<double>(matched[static_cast<size_t>(n)]) /
                               static_cast<double>(total[static_cast<size_t>(n)])
                         : 0.0;
    result.precisions[static_cast<size_t>(n)] = p;
    if (p <= 0.0) return result;  // zero precision pins the score at zero
    log_prec_sum += std::log(p);
  }
  result.score = 100.0 * result.brevity_penalty * std::exp(log_prec_sum / 4.0);
  return result;
}

// ---------------------------------------------------------------------------
// preservation

FrequencyBuckets::FrequencyBuckets(const std::unordered_map<int, long long>& counts,
                                   int n_buckets)
    : n_buckets_(n_buckets) {
  if (n_buckets_ < 1) throw std::invalid_argument("frequency buckets: need >= 1 bucket");
  if (counts.empty()) throw std::invalid_argument("frequency buckets: empty counts");
  std::vector<std::pair<long long, int>> order;  // (count, token)
  order.reserve(counts.size());
  for (const auto& [tok, c] : counts) order.emplace_back(c, tok);
  std::sort(order.begin(), order.end());
  ranges_.assign(static_cast<size_t>(n_buckets_), {0, 0});
  const size_t n = order.size();
  for (size_t i = 0; i < n; ++i) {
    const int b = std::min(n_buckets_ - 1,
                           static_cast<int>(i * static_cast<size_t>(n_buckets_) / n));
    assignment_[order[i].second] = b;
    auto& [lo, hi] = ranges_[static_cast<size_t>(b)];
    if (lo == 0 && hi == 0) lo = hi = order[i].first;
    lo = std::min(lo, order[i].first);
    hi = std::max(hi, order[i].first);
  }
}

int FrequencyBuckets::bucket_of(int token) const {
  auto it = assignment_.find(token);
  return it == assignment_.end() ? -1 : it->second;
}

std::pair<long long, long long> FrequencyBuckets::count_range(int bucket) const {
  return ranges_.at(static_cast<size_t>(bucket));
}

PreservationReport preservation_ratio(const std::vector<Sample>& samples,
                                      const std::vector<std::vector<int>>& hyps,
                                      const OracleTranslator& lexicon,
                                      const FrequencyBuckets& buckets) {
  if (samples.size() != hyps.size())
    throw std::invalid_argument("preservation: sample/hypothesis counts differ");
  PreservationReport report;
  report.buckets.assign(static_cast<size_t>(buckets.n_buckets()), {});
  for (int b = 0; b < buckets.n_buckets(); ++b) {
    auto [lo, hi] = buckets.count_range(b);
    report.buckets[static_cast<size_t>(b)].min_count = lo;
    report.buckets[static_cast<size_t>(b)].max_count = hi;
  }
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    std::unordered_set<int> hyp_set(hyps[i].begin(), hyps[i].end());
    for (int tok : s.x) {
      if (!lexicon.is_word_of(tok, s.l_src)) {
        ++report.missing;
        continue;
      }
      const int b = buckets.bucket_of(tok);
      if (b < 0) {
        ++report.missing;
        continue;
      }
      const int expected = lexicon.translate_token(tok, s.l_src, s.l_tgt);
      auto& bucket = report.buckets[static_cast<size_t>(b)];
      ++bucket.occurrences;
      if (hyp_set.count(expected)) ++bucket.preserved;
    }
  }
  for (auto& b : report.buckets)
    b.ratio = b.occurrences > 0
                  ? static_cast<double>(b.preserved) / static_cast<double>(b.occurrences)
                  : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// translation helpers

DecoderKind parse_decoder(const std::string& text) {
  if (text == "lookahead") return DecoderKind::DagLookahead;
  if (text == "ngram-beam") return DecoderKind::DagNgramBeam;
  if (text == "ar-greedy") return DecoderKind::ArGreedy;
  throw std::invalid_argument("decoder: expected lookahead|ngram-beam|ar-greedy, got '" + text +
                              "'");
}

std::string decoder_str(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::DagLookahead: return "lookahead";
    case DecoderKind::DagNgramBeam: return "ngram-beam";
    case DecoderKind::ArGreedy: return "ar-greedy";
  }
  return "lookahead";
}

std::vector<int> translate_one(const Model& model, const std::vector<int>& x, int l_tgt,
                               const TranslateOptions& opts) {
  NoGradGuard guard;
  Tensor enc = model.encode(x, l_tgt);
  const int t_x = static_cast<int>(x.size());
  switch (opts.kind) {
    case DecoderKind::ArGreedy: {
      const int min_len = static_cast<int>(opts.ar_min_len_ratio * t_x);
      std::vector<int> raw = model.greedy_ar(enc, t_x + opts.ar_extra_len, min_len);
      return postprocess(raw, opts.collapse_repeats, opts.special_boundary);
    }
    case DecoderKind::DagNgramBeam: {
      DagOutput dag = model.decode_dag(enc, t_x);
      if (opts.lms == nullptr || static_cast<size_t>(l_tgt) >= opts.lms->size())
        throw std::invalid_argument("translate: beam decoding needs per-language models");
      BeamOptions beam = opts.beam;
      beam.collapse_repeats = opts.collapse_repeats;
      beam.special_boundary = opts.special_boundary;
      return ngram_beam_search(tables(dag), (*opts.lms)[static_cast<size_t>(l_tgt)], beam);
    }
    case DecoderKind::DagLookahead:
    default: {
      DagOutput dag = model.decode_dag(enc, t_x);
      return lookahead_decode(tables(dag), opts.collapse_repeats, opts.special_boundary);
    }
  }
}

std::vector<std::vector<int>> translate_many(const Model& model,
                                             const std::vector<std::vector<int>>& xs, int l_tgt,
                                             const TranslateOptions& opts) {
  std::vector<std::vector<int>> out(xs.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < xs.size(); ++i) out[i] = translate_one(model, xs[i], l_tgt, opts);
  return out;
}

LatencyStats bench_latency(const Model& model, const std::vector<std::vector<int>>& xs,
                           int l_tgt, const TranslateOptions& opts, int warmup) {
  if (xs.empty()) throw std::invalid_argument("bench: no sentences");
  using Clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i)
    translate_one(model, xs[static_cast<size_t>(i) % xs.size()], l_tgt, opts);
  std::vector<double> ms;
  ms.reserve(xs.size());
  double total = 0.0;
  for (const auto& x : xs) {
    const auto start = Clock::now();
    volatile size_t sink = translate_one(model, x, l_tgt, opts).size();
    (void)sink;
    const std::chrono::duration<double, std::milli> took = Clock::now() - start;
    ms.push_back(took.count());
    total += took.count();
  }
  std::sort(ms.begin(), ms.end());
  LatencyStats stats;
  stats.n = static_cast<int>(ms.size());
  stats.mean_ms = total / static_cast<double>(ms.size());
  stats.p50_ms = ms[ms.size() / 2];
  stats.p95_ms = ms[std::min(ms.size() - 1, static_cast<size_t>(ms.size() * 95 / 100))];
  return stats;
}

// ---------------------------------------------------------------------------
// reports

void EvalReport::save_json(const std::string& path) const {
  nlohmann::json j;
  j["schema"] = "dagnmt-eval-report-v1";
  j["supervised_avg"] = supervised_avg;
  j["zero_shot_avg"] = zero_shot_avg;
  j["directions"] = nlohmann::json::array();
  for (const DirectionScore& d : directions) {
    j["directions"].push_back({{"src", "l" + std::to_string(d.l_src)},
                               {"tgt", "l" + std::to_string(d.l_tgt)},
                               {"bleu", d.bleu},
                               {"sentences", d.n_sentences},
                               {"supervised", d.supervised}});
  }
  if (has_preservation) {
    nlohmann::json buckets = nlohmann::json::array();
    for (size_t b = 0; b < preservation.buckets.size(); ++b) {
      const auto& pb = preservation.buckets[b];
      buckets.push_back({{"bucket", b + 1},
                         {"min_count", pb.min_count},
                         {"max_count", pb.max_count},
                         {"occurrences", pb.occurrences},
                         {"preserved", pb.preserved},
                         {"ratio", pb.ratio}});
    }
    j["preservation"] = {{"buckets", buckets}, {"missing", preservation.missing}};
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("eval report: cannot write " + path);
  os << j.dump(2) << "\n";
}

EvalReport evaluate_model(const Model& model, const Corpus& corpus,
                          const TranslateOptions& opts) {
  EvalReport report;
  OracleTranslator lexicon(corpus.spec);
  FrequencyBuckets buckets(train_token_counts(corpus));
  std::vector<Sample> all_samples;
  std::vector<std::vector<int>> all_hyps;

  double sup_sum = 0.0, zs_sum = 0.0;
  int sup_n = 0, zs_n = 0;
  for (const ParallelData& d : corpus.test) {
    std::vector<std::vector<int>> hyps = translate_many(model, d.src, d.l_tgt, opts);
    BleuResult b = bleu(hyps, d.tgt);
    DirectionScore score;
    score.l_src = d.l_src;
    score.l_tgt = d.l_tgt;
    score.bleu = b.score;
    score.n_sentences = static_cast<int>(d.size());
    score.supervised = corpus.graph.has(d.l_src, d.l_tgt);
    report.directions.push_back(score);
    if (score.supervised) {
      sup_sum += b.score;
      ++sup_n;
    } else {
      zs_sum += b.score;
      ++zs_n;
    }
    for (size_t i = 0; i < d.size(); ++i) {
      all_samples.push_back(d.sample(i));
      all_hyps.push_back(hyps[i]);
    }
  }
  report.supervised_avg = sup_n ? sup_sum / sup_n : 0.0;
  report.zero_shot_avg = zs_n ? zs_sum / zs_n : 0.0;
  report.preservation = preservation_ratio(all_samples, all_hyps, lexicon, buckets);
  report.has_preservation = true;
  return report;
}

std::vector<NgramLM> train_language_models(const Corpus& corpus, int order, double add_k) {
  std::vector<NgramLM> lms;
  for (int l = 0; l < corpus.spec.n_languages; ++l) {
    std::vector<std::vector<int>> mono;
    for (const ParallelData& d : corpus.train)
      if (d.l_tgt == l)
        for (const auto& t : d.tgt) mono.push_back(t);
    lms.push_back(lm_train(mono, order, l, add_k));
  }
  return lms;
}

double validation_bleu(const Model& model, const Corpus& corpus,
                       const TranslateOptions& opts) {
  double sum = 0.0;
  int n = 0;
  for (const ParallelData& d : corpus.valid) {
    std::vector<std::vector<int>> hyps = translate_many(model, d.src, d.l_tgt, opts);
    sum += bleu(hyps, d.tgt).score;
    ++n;
  }
  return n ? sum / n : 0.0;
}

}  // namespace dagnmt
