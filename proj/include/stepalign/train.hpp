#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stepalign/core.hpp"
#include "stepalign/losses.hpp"
#include "stepalign/model.hpp"

namespace stepalign {

/// Which terms enter the optimized objective. Disabled terms are still
/// evaluated and logged. Used for ablations.
struct LossTerms {
  bool seq = true;
  bool glob = true;
  bool div = true;
  bool smooth = true;
};

struct TrainConfig {
  int epochs = 30;
  int warmup_epochs = 3;
  double peak_lr = 3e-3;
  double final_lr = 1e-6;
  double weight_decay = 1e-4;
  int batch_size = 8;
  double drop_percentile = 0.8;
  std::uint64_t seed = 0;
  ContrastiveConfig contrastive;
  ModelConfig model;
  LossTerms terms;

  void validate() const;
  /// 60 epochs, 3 warm-up epochs to 3e-4, cosine to 1e-6, weight decay 1e-4,
  /// six layers and 32 slots.
  static TrainConfig full_scale_defaults(int dim);
};

/// Linear warm-up from 0 to peak_lr over warmup_epochs, then cosine decay to
/// final_lr at the last step of the last epoch.
double lr_at(std::int64_t step, std::int64_t steps_per_epoch, const TrainConfig& cfg);

struct StepLog {
  std::int64_t step = 0;
  LossBreakdown loss;
  double lr = 0.0;
};

std::string to_json_line(const StepLog& entry);

/// Adam with decoupled weight decay (beta1 0.9, beta2 0.999, eps 1e-8).
class AdamW {
 public:
  AdamW(const ModelParams& params, double weight_decay);
  void step(ModelParams& params, const std::vector<Matrix>& grads, double lr);
  [[nodiscard]] std::int64_t steps() const { return t_; }

 private:
  double weight_decay_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct TrainResult {
  ModelParams params;
  std::vector<StepLog> log;
};

using EpochCallback = std::function<void(int epoch, const ModelParams& params, std::int64_t step)>;

/// Deterministic given cfg.seed: the data order, dropout masks and
/// smoothness sampling all come from one seeded source.
TrainResult train(const std::vector<DatasetSample>& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch_end = {});

/// Objective over the whole dataset with dropout off and batches taken in
/// dataset order; smoothness sampling uses `seed`. Values are batch means.
LossBreakdown evaluate_objective(const ModelParams& params, const std::vector<DatasetSample>& dataset,
                                 const TrainConfig& cfg, std::uint64_t seed);

}  // namespace stepalign
