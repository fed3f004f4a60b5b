#include "dagnmt/pivotbt.hpp"

#include <stdexcept>

#include "dagnmt/ops.hpp"

namespace dagnmt {

BtMode parse_bt_mode(const std::string& text) {
  if (text == "pivotbt") return BtMode::PivotBT;
  if (text == "rand-lang") return BtMode::RandNoPivot;
  if (text == "src-lang") return BtMode::SrcNoPivot;
  if (text == "off") return BtMode::Off;
  throw std::invalid_argument("bt mode: expected pivotbt|rand-lang|src-lang|off, got '" + text +
                              "'");
}

std::string bt_mode_str(BtMode mode) {
  switch (mode) {
    case BtMode::PivotBT: return "pivotbt";
    case BtMode::RandNoPivot: return "rand-lang";
    case BtMode::SrcNoPivot: return "src-lang";
    case BtMode::Off: return "off";
  }
  return "off";
}

void BtPolicy::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("bt policy: lambda must be >= 0");
  if (warmup_frac < 0.0 || warmup_frac > 1.0)
    throw std::invalid_argument("bt policy: warmup fraction must be in [0, 1]");
}

int pick_aug_language(Rng& rng, int n_languages, int l_tgt) {
  if (n_languages < 2)
    throw std::invalid_argument("pick_aug_language: need at least 2 languages");
  if (l_tgt < 0 || l_tgt >= n_languages)
    throw std::invalid_argument("pick_aug_language: l_tgt out of range");
  const int k = rng.uniform_int(0, n_languages - 2);
  return k >= l_tgt ? k + 1 : k;
}

BtRoute plan_route(int l_tgt, int l_aug, const DirectionGraph& graph) {
  if (l_aug == l_tgt) throw std::invalid_argument("plan_route: l_aug must differ from l_tgt");
  if (graph.has(l_tgt, l_aug)) return {RouteKind::Direct, l_aug, -1};
  const int hub = graph.hub();
  if (hub != l_tgt && hub != l_aug && graph.has(l_tgt, hub) && graph.has(hub, l_aug))
    return {RouteKind::Pivot, l_aug, hub};
  throw std::runtime_error("plan_route: unroutable direction " + std::to_string(l_tgt) + " -> " +
                           std::to_string(l_aug));
}

namespace {

std::vector<int> decode_once(const Model& model, const std::vector<int>& src, int tgt_lang,
                             const BtDecoder& decoder) {
  NoGradGuard guard;
  Tensor enc = model.encode(src, tgt_lang);
  DagOutput dag = model.decode_dag(enc, static_cast<int>(src.size()));
  DagTables tab = tables(dag);
  if (decoder.method == BtDecode::NgramBeam) {
    if (decoder.lms == nullptr ||
        static_cast<size_t>(tgt_lang) >= decoder.lms->size())
      throw std::invalid_argument("back_translate: beam decode needs a language model per language");
    BeamOptions opts = decoder.beam;
    opts.special_boundary = decoder.special_boundary;
    return ngram_beam_search(tab, (*decoder.lms)[static_cast<size_t>(tgt_lang)], opts);
  }
  return lookahead_decode(tab, true, decoder.special_boundary);
}

}  // namespace

BtResult back_translate(const Model& model, const std::vector<int>& y_no_eos, int l_tgt,
                        const BtRoute& route, const BtDecoder& decoder) {
  if (y_no_eos.empty()) throw std::invalid_argument("back_translate: empty target sentence");
  BtResult r;
  std::vector<int> cur = y_no_eos;
  if (route.kind == RouteKind::Pivot) {
    cur = decode_once(model, cur, route.l_pivot, decoder);
    ++r.decode_calls;
    if (cur.empty()) {
      r.tokens = y_no_eos;
      r.fell_back = true;
      return r;
    }
  }
  cur = decode_once(model, cur, route.l_aug, decoder);
  ++r.decode_calls;
  if (cur.empty()) {
    r.tokens = y_no_eos;
    r.fell_back = true;
    return r;
  }
  r.tokens = std::move(cur);
  return r;
}

std::vector<Sample> augment_batch(Rng& rng, const std::vector<Sample>& batch, const Model& model,
                                  const BtPolicy& policy, const DirectionGraph& graph,
                                  const BtDecoder& decoder, AugmentStats* stats) {
  policy.validate();
  if (policy.mode == BtMode::Off)
    throw std::invalid_argument("augment_batch: policy is off");
  if (batch.empty()) return {};

  const int n_lang = graph.n_languages();
  // language picks and routes are drawn serially; decodes are independent
  std::vector<BtRoute> routes(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = batch[i];
    switch (policy.mode) {
      case BtMode::PivotBT:
        routes[i] = plan_route(s.l_tgt, pick_aug_language(rng, n_lang, s.l_tgt), graph);
        break;
      case BtMode::RandNoPivot:
        // direct decode even when the direction is unseen
        routes[i] = {RouteKind::Direct, pick_aug_language(rng, n_lang, s.l_tgt), -1};
        break;
      case BtMode::SrcNoPivot:
        routes[i] = {RouteKind::Direct, s.l_src, -1};
        break;
      case BtMode::Off:
        break;
    }
  }

  std::vector<Sample> out(batch.size());
  int fallbacks = 0, calls = 0;
  std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(dynamic) reduction(+ : fallbacks, calls)
  for (size_t i = 0; i < batch.size(); ++i) {
    try {
      const Sample& s = batch[i];
      std::vector<int> y_no_eos = s.y;
      if (!y_no_eos.empty() && y_no_eos.back() == kEos) y_no_eos.pop_back();
      BtResult r = back_translate(model, y_no_eos, s.l_tgt, routes[i], decoder);
      fallbacks += r.fell_back ? 1 : 0;
      calls += r.decode_calls;
      Sample synth;
      synth.x = std::move(r.tokens);
      synth.l_src = routes[i].l_aug;
      synth.y = s.y;
      synth.l_tgt = s.l_tgt;
      synth.corpus_index = s.corpus_index;
      synth.validate();
      out[i] = std::move(synth);
    } catch (...) {
#pragma omp critical
      if (first_error == nullptr) first_error = std::current_exception();
    }
  }
  if (first_error != nullptr) std::rethrow_exception(first_error);
  if (stats != nullptr) {
    stats->fallbacks += fallbacks;
    stats->decode_calls += calls;
    stats->samples += static_cast<int>(batch.size());
  }
  return out;
}

Tensor combined_loss(const Tensor& l_real, const Tensor& l_bt, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("combined_loss: lambda must be >= 0");
  return add(l_real, mul_scalar(l_bt, lambda));
}

}  // namespace dagnmt
