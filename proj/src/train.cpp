#include "dagnmt/train.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dagnmt/dag_objective.hpp"
#include "dagnmt/ops.hpp"

namespace dagnmt {

void TrainConfig::validate() const {
  if (peak_lr <= 0.0) throw std::invalid_argument("train config: peak_lr must be positive");
  if (warmup_updates < 1 || total_updates < 1)
    throw std::invalid_argument("train config: update counts must be positive");
  if (warmup_updates > total_updates)
    throw std::invalid_argument("train config: warmup exceeds total updates");
  if (token_budget < 4) throw std::invalid_argument("train config: token budget too small");
  if (checkpoint_interval < 1)
    throw std::invalid_argument("train config: checkpoint interval must be positive");
  if (keep_best < 1) throw std::invalid_argument("train config: keep_best must be >= 1");
  if (threads < 1) throw std::invalid_argument("train config: threads must be >= 1");
  if (clip_norm < 0.0) throw std::invalid_argument("train config: clip_norm must be >= 0");
}

double lr_at(int step, const TrainConfig& cfg) {
  if (step < 1) throw std::invalid_argument("lr_at: step starts at 1");
  if (step <= cfg.warmup_updates)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_updates);
  return cfg.peak_lr * std::sqrt(static_cast<double>(cfg.warmup_updates) /
                                 static_cast<double>(step));
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<std::pair<std::string, Tensor>>* params, double beta1, double beta2,
           double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params_->size());
  v_.resize(params_->size());
  for (size_t i = 0; i < params_->size(); ++i) {
    m_[i].assign((*params_)[i].second.numel(), 0.0);
    v_[i].assign((*params_)[i].second.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params_->size(); ++i) {
    Tensor& p = (*params_)[i].second;
    if (!p.has_grad()) continue;
    const std::vector<double>& g = *p.grad_if_present();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    std::vector<double>& w = p.values();
    for (size_t j = 0; j < g.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
    p.zero_grad();
  }
}

void Adam::append_state(CheckpointExtra* extra) const {
  extra->arrays.emplace_back("adam.t", std::vector<double>{static_cast<double>(t_)});
  for (size_t i = 0; i < params_->size(); ++i) {
    extra->arrays.emplace_back("adam.m." + (*params_)[i].first, m_[i]);
    extra->arrays.emplace_back("adam.v." + (*params_)[i].first, v_[i]);
  }
}

void Adam::restore_state(const CheckpointExtra& extra) {
  auto find = [&](const std::string& name) -> const std::vector<double>* {
    for (const auto& [n, arr] : extra.arrays)
      if (n == name) return &arr;
    return nullptr;
  };
  const std::vector<double>* t = find("adam.t");
  if (t == nullptr || t->size() != 1)
    throw std::runtime_error("resume: checkpoint has no optimizer state");
  t_ = static_cast<int>((*t)[0]);
  for (size_t i = 0; i < params_->size(); ++i) {
    const std::vector<double>* m = find("adam.m." + (*params_)[i].first);
    const std::vector<double>* v = find("adam.v." + (*params_)[i].first);
    if (m == nullptr || v == nullptr || m->size() != m_[i].size() || v->size() != v_[i].size())
      throw std::runtime_error("resume: optimizer state mismatch for " + (*params_)[i].first);
    m_[i] = *m;
    v_[i] = *v;
  }
}

// ---------------------------------------------------------------------------
// training loop

namespace {

std::vector<double> rng_state_to_doubles(const Rng::State& s) {
  std::vector<double> out(3);
  static_assert(sizeof(double) == sizeof(uint64_t));
  std::memcpy(&out[0], &s.state, sizeof(uint64_t));
  out[1] = static_cast<double>(s.has_spare);
  out[2] = s.spare;
  return out;
}

Rng::State rng_state_from_doubles(const std::vector<double>& v) {
  if (v.size() != 3) throw std::runtime_error("resume: bad rng state");
  Rng::State s;
  std::memcpy(&s.state, &v[0], sizeof(uint64_t));
  s.has_spare = static_cast<uint8_t>(v[1]);
  s.spare = v[2];
  return s;
}

std::string ckpt_path(const std::string& out_dir, int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06d.ckpt", step);
  return out_dir + "/" + buf;
}

struct ForwardBatch {
  std::vector<DagOutput> dags;
  std::vector<const std::vector<int>*> targets;
};

// Per-sentence forward passes; lattices re-upsample to fit long targets.
// Graphs are independent and parameters are read-only here, so sentences can
// build in parallel; the single backward pass stays serial.
ForwardBatch forward_batch(const Model& model, const std::vector<Sample>& batch,
                           bool parallel) {
  ForwardBatch fb;
  fb.dags.resize(batch.size());
  fb.targets.resize(batch.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = batch[i];
    Tensor enc = model.encode(s.x, s.l_tgt);
    fb.dags[i] =
        model.decode_dag(enc, static_cast<int>(s.x.size()), static_cast<int>(s.y.size()));
    fb.targets[i] = &s.y;
  }
  return fb;
}

double grad_norm(const std::vector<std::pair<std::string, Tensor>>& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    const std::vector<double>* g = p.grad_if_present();
    if (g == nullptr) continue;
    for (double x : *g) sq += x * x;
  }
  return std::sqrt(sq);
}

void scale_grads(std::vector<std::pair<std::string, Tensor>>& params, double factor) {
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double& x : p.grad()) x *= factor;
  }
}

}  // namespace

TrainResult train(Model& model, const Corpus& corpus, const BtPolicy& policy,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_path) {
  cfg.validate();
  policy.validate();
  std::filesystem::create_directories(out_dir);
  omp_set_num_threads(cfg.threads);

  const int special_boundary = kNumSpecials + corpus.spec.n_languages;
  BatchSampler sampler(&corpus.train, cfg.token_budget);
  Adam opt(&model.params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  Rng data_rng(cfg.seed);
  Rng bt_rng(cfg.seed ^ 0x5b7e0a11u);
  Rng dropout_rng(cfg.seed ^ 0x3d91cc24u);
  model.set_train_rng(&dropout_rng);

  BtDecoder bt_decoder;
  bt_decoder.method = policy.decode;
  bt_decoder.special_boundary = special_boundary;
  std::vector<NgramLM> bt_lms;
  if (policy.mode != BtMode::Off && policy.decode == BtDecode::NgramBeam) {
    bt_lms = train_language_models(corpus);
    bt_decoder.lms = &bt_lms;
  }
  const int bt_start_step =
      static_cast<int>(policy.warmup_frac * static_cast<double>(cfg.total_updates));

  TranslateOptions val_opts;
  val_opts.kind = DecoderKind::DagLookahead;
  val_opts.special_boundary = special_boundary;

  TrainResult result;
  int start_step = 0;

  if (!resume_path.empty()) {
    CheckpointExtra extra;
    Model restored = load_checkpoint(resume_path, &extra);
    if (restored.params().size() != model.params().size())
      throw std::runtime_error("resume: incompatible checkpoint " + resume_path);
    for (size_t i = 0; i < model.params().size(); ++i)
      model.params()[i].second.values() = restored.params()[i].second.values();
    opt.restore_state(extra);
    for (const auto& [name, arr] : extra.arrays) {
      if (name == "train.step") start_step = static_cast<int>(arr[0]);
      else if (name == "train.data_rng") data_rng.restore(rng_state_from_doubles(arr));
      else if (name == "train.bt_rng") bt_rng.restore(rng_state_from_doubles(arr));
      else if (name == "train.dropout_rng") dropout_rng.restore(rng_state_from_doubles(arr));
      else if (name == "train.skipped") result.skipped_samples = static_cast<int>(arr[0]);
      else if (name == "train.bt_fallbacks") result.bt_fallbacks = static_cast<int>(arr[0]);
      else if (name == "train.history") {
        // earlier checkpoints live next to the checkpoint being resumed from
        const std::string src_dir =
            std::filesystem::path(resume_path).parent_path().string();
        for (size_t i = 0; i + 1 < arr.size(); i += 2) {
          CheckpointRecord rec;
          rec.step = static_cast<int>(arr[i]);
          rec.val_bleu = arr[i + 1];
          rec.path = ckpt_path(src_dir.empty() ? "." : src_dir, rec.step);
          result.checkpoints.push_back(rec);
        }
      }
    }
    if (start_step == 0) throw std::runtime_error("resume: checkpoint lacks training state");
  }

  std::ofstream log(out_dir + "/metrics.jsonl", start_step == 0 ? std::ios::trunc
                                                                : std::ios::app);
  if (!log) throw std::runtime_error("train: cannot open metrics log in " + out_dir);

  // dropout draws must stay ordered, so only dropout-free models build the
  // per-sentence graphs in parallel
  const bool par_fwd = model.config().dropout == 0.0;
  AugmentStats bt_stats;
  bt_stats.fallbacks = result.bt_fallbacks;
  double last_loss = 0.0;

  for (int step = start_step + 1; step <= cfg.total_updates; ++step) {
    std::vector<Sample> batch = sampler.next(data_rng);

    ForwardBatch real = forward_batch(model, batch, par_fwd);
    std::vector<BatchItem> real_items;
    for (size_t i = 0; i < real.dags.size(); ++i)
      real_items.push_back({&real.dags[i], real.targets[i]});
    BatchLoss real_loss = batch_dag_loss(real_items);
    result.skipped_samples += real_loss.skipped;

    Tensor loss = real_loss.loss;
    double bt_loss_value = 0.0;
    const bool bt_active = policy.mode != BtMode::Off && step > bt_start_step;
    if (bt_active) {
      std::vector<Sample> synth =
          augment_batch(bt_rng, batch, model, policy, corpus.graph, bt_decoder, &bt_stats);
      ForwardBatch synth_fwd = forward_batch(model, synth, par_fwd);
      std::vector<BatchItem> synth_items;
      for (size_t i = 0; i < synth_fwd.dags.size(); ++i)
        synth_items.push_back({&synth_fwd.dags[i], synth_fwd.targets[i]});
      BatchLoss synth_loss = batch_dag_loss(synth_items);
      result.skipped_samples += synth_loss.skipped;
      bt_loss_value = synth_loss.loss.item();
      loss = combined_loss(real_loss.loss, synth_loss.loss, policy.lambda);
    }

    last_loss = loss.item();
    if (!std::isfinite(last_loss)) {
      std::string ids;
      for (const Sample& s : batch) ids += std::to_string(s.corpus_index) + " ";
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                               ", direction l" + std::to_string(batch.front().l_src) + "->l" +
                               std::to_string(batch.front().l_tgt) + ", sentence ids: " + ids);
    }

    model.zero_grads();
    backward(loss);
    if (cfg.clip_norm > 0.0) {
      const double norm = grad_norm(model.params());
      if (norm > cfg.clip_norm) scale_grads(model.params(), cfg.clip_norm / norm);
    }
    opt.step(lr_at(step, cfg));

    if (step % cfg.log_every == 0 || step == cfg.total_updates) {
      nlohmann::json j{{"step", step},
                       {"lr", lr_at(step, cfg)},
                       {"loss", last_loss},
                       {"l_real", real_loss.loss.item()},
                       {"token_nll", real_loss.token_nll},
                       {"skipped", result.skipped_samples}};
      if (policy.mode != BtMode::Off) {
        j["l_bt"] = bt_loss_value;
        j["bt_active"] = bt_active;
        j["bt_fallbacks"] = bt_stats.fallbacks;
      }
      log << j.dump() << "\n";
      log.flush();
    }

    if (step % cfg.checkpoint_interval == 0 || step == cfg.total_updates) {
      const double val = validation_bleu(model, corpus, val_opts);
      CheckpointRecord rec;
      rec.step = step;
      rec.val_bleu = val;
      rec.path = ckpt_path(out_dir, step);
      result.checkpoints.push_back(rec);

      CheckpointExtra extra;
      opt.append_state(&extra);
      extra.arrays.emplace_back("train.step", std::vector<double>{static_cast<double>(step)});
      extra.arrays.emplace_back("train.data_rng", rng_state_to_doubles(data_rng.save()));
      extra.arrays.emplace_back("train.bt_rng", rng_state_to_doubles(bt_rng.save()));
      extra.arrays.emplace_back("train.dropout_rng",
                                rng_state_to_doubles(dropout_rng.save()));
      extra.arrays.emplace_back("train.skipped",
                                std::vector<double>{static_cast<double>(result.skipped_samples)});
      extra.arrays.emplace_back("train.bt_fallbacks",
                                std::vector<double>{static_cast<double>(bt_stats.fallbacks)});
      std::vector<double> history;
      for (const CheckpointRecord& r : result.checkpoints) {
        history.push_back(static_cast<double>(r.step));
        history.push_back(r.val_bleu);
      }
      extra.arrays.emplace_back("train.history", history);
      save_checkpoint(rec.path, model, &extra);

      nlohmann::json j{{"step", step}, {"val_bleu", val}, {"checkpoint", rec.path}};
      log << j.dump() << "\n";
      log.flush();
    }
  }

  model.set_train_rng(nullptr);
  result.bt_fallbacks = bt_stats.fallbacks;
  result.final_loss = last_loss;

  const int k = std::min<int>(cfg.keep_best, static_cast<int>(result.checkpoints.size()));
  Model averaged = average_checkpoints(result.checkpoints, k);
  result.averaged_path = out_dir + "/model_avg.ckpt";
  save_checkpoint(result.averaged_path, averaged);
  return result;
}

Model average_checkpoints(const std::vector<CheckpointRecord>& scored, int k) {
  if (scored.empty()) throw std::invalid_argument("average_checkpoints: no checkpoints");
  if (k < 1 || k > static_cast<int>(scored.size()))
    throw std::invalid_argument("average_checkpoints: k must be in [1, " +
                                std::to_string(scored.size()) + "]");
  std::vector<CheckpointRecord> ranked = scored;
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.val_bleu > b.val_bleu;
  });
  ranked.resize(static_cast<size_t>(k));

  Model mean = load_checkpoint(ranked[0].path);
  for (int i = 1; i < k; ++i) {
    Model next = load_checkpoint(ranked[static_cast<size_t>(i)].path);
    if (next.params().size() != mean.params().size())
      throw std::runtime_error("average_checkpoints: parameter sets differ");
    for (size_t p = 0; p < mean.params().size(); ++p) {
      auto& acc = mean.params()[p].second.values();
      const auto& add_vals = next.params()[p].second.values();
      if (acc.size() != add_vals.size())
        throw std::runtime_error("average_checkpoints: shape mismatch for " +
                                 mean.params()[p].first);
      for (size_t j = 0; j < acc.size(); ++j) acc[j] += add_vals[j];
    }
  }
  for (auto& [name, t] : mean.params())
    for (double& v : t.values()) v /= static_cast<double>(k);
  return mean;
}

}  // namespace dagnmt
