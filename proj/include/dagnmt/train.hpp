#pragma once

// Adam with linear warmup and inverse-sqrt decay, the training loop with
// online back-translation, interval validation and checkpointing, bit-exact
// resume, and best-k checkpoint averaging.

#include <string>
#include <vector>

#include "dagnmt/data.hpp"
#include "dagnmt/eval.hpp"
#include "dagnmt/model.hpp"
#include "dagnmt/pivotbt.hpp"

namespace dagnmt {

struct TrainConfig {
  double peak_lr = 5e-4;
  int warmup_updates = 1000;
  int total_updates = 20000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  int token_budget = 2000;
  uint64_t seed = 1;
  int checkpoint_interval = 500;
  int keep_best = 5;
  int threads = 1;
  double clip_norm = 0.0;  // 0 disables clipping
  int log_every = 50;

  void validate() const;
};

// linear warmup to peak, then peak * sqrt(warmup / step)
double lr_at(int step, const TrainConfig& cfg);

class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>>* params, double beta1, double beta2,
       double eps);

  // applies one update from the accumulated gradients, then clears them
  void step(double lr);
  int t() const { return t_; }

  void append_state(CheckpointExtra* extra) const;
  void restore_state(const CheckpointExtra& extra);

 private:
  std::vector<std::pair<std::string, Tensor>>* params_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct CheckpointRecord {
  int step = 0;
  double val_bleu = 0.0;
  std::string path;
};

struct TrainResult {
  std::vector<CheckpointRecord> checkpoints;
  std::string averaged_path;  // best-k parameter average
  int skipped_samples = 0;
  int bt_fallbacks = 0;
  double final_loss = 0.0;
};

// Trains in place. Checkpoints, the metrics log (metrics.jsonl) and the final
// averaged model land in out_dir. resume_path restarts bit-exactly from a
// checkpoint written by this loop. Deterministic for a fixed seed with one
// thread.
TrainResult train(Model& model, const Corpus& corpus, const BtPolicy& policy,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_path = "");

// elementwise mean of the k best-scoring checkpoints
Model average_checkpoints(const std::vector<CheckpointRecord>& scored, int k);

}  // namespace dagnmt
