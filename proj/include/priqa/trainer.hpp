#pragma once

#include <filesystem>
#include <optional>

#include "priqa/checkpoint.hpp"
#include "priqa/config.hpp"
#include "priqa/dataset.hpp"
#include "priqa/model.hpp"

namespace priqa {

struct LossBreakdown {
  double total = 0.0;
  double reg_fr = 0.0;
  double reg_pr = 0.0;
  double reg_nr = 0.0;
  double triplet = 0.0;
};

// One optimizer over every trainable parameter: Adam with L2 weight decay
// folded into the gradient and a global-norm clip as a numerics guard.
class Trainer {
 public:
  Trainer(PrfModel<float>& model, const TrainConfig& cfg);

  LossBreakdown train_step(const TrainingBatch& batch);

  AdamState& adam() { return adam_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  PrfModel<float>& model_;
  TrainConfig cfg_;
  std::vector<Parameter<float>*> params_;
  AdamState adam_;

  void apply_update();
};

struct FitResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  int best_epoch = -1;
  double best_val_srcc = -2.0;
  int final_epoch = 0;
};

// Full training loop: per-epoch batches, periodic validation SRCC of Q^NR,
// best-checkpoint retention, and an append-only JSONL log. Pass `resume` to
// continue from a saved checkpoint; the remaining epochs replay the same
// deterministic batch stream an uninterrupted run would have seen.
FitResult fit(const RunConfig& config, const DatabaseManifest& manifest,
              const SplitSpec& split, const std::filesystem::path& out_dir,
              const std::optional<std::filesystem::path>& resume = std::nullopt);

}  // namespace priqa
