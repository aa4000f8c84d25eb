#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ucast/augment.hpp"
#include "ucast/common.hpp"
#include "ucast/network.hpp"
#include "ucast/patch_store.hpp"

namespace ucast {

struct DetectTrainConfig {
  BackboneConfig backbone;
  std::vector<int> deltas;  // archives to mix; empty = every archive passed in
  int64_t steps = 2000;
  int64_t batch_size = 16;
  double lr = 1e-4;
  double sampler_a = 50.0;
  int64_t threshold_window = 500;
  double default_threshold = 0.5;
  int64_t log_every = 50;
  int64_t checkpoint_every = 500;
  int64_t eval_every = 0;  // with a val archive: evaluate and keep best.pt
  AugmentConfig augment;
  uint64_t seed = 1;

  void validate() const;
};

/// Two-phase schedule: phase A trains the head alone for freeze_steps at
/// lr_frozen with the backbone frozen, then phase B fine-tunes everything for
/// finetune_steps at lr_finetune with a fresh optimizer. The threshold
/// tracker resets at the phase boundary. `init` names a checkpoint whose
/// backbone seeds this run; empty means scratch.
struct ForecastTrainConfig {
  BackboneConfig backbone;
  int delta_months = 6;
  int64_t freeze_steps = 5000;
  int64_t finetune_steps = 5000;
  int64_t batch_size = 16;  // horizons 21 and 24 default to 4 at the CLI
  double lr_frozen = 1e-4;
  double lr_finetune = 1e-5;
  double sampler_a = 50.0;
  int64_t threshold_window = 500;
  double default_threshold = 0.5;  // 0.33 for the three-logit task
  double lambda_mix = 1000.0;      // time-range objective only
  int early_boundary = 12;         // months 1..boundary are "early"
  int horizon = 24;
  int64_t log_every = 50;
  int64_t checkpoint_every = 500;
  int64_t eval_every = 0;
  AugmentConfig augment;
  uint64_t seed = 1;
  std::string init;

  void validate() const;
};

/// Weights live in <path>; everything else in a JSON sidecar next to it.
struct CheckpointMeta {
  std::string task;                 // "detect", "forecast", "timerange"
  std::string provenance;           // "scratch", "stage1", "external"
  BackboneConfig backbone;
  int out_logits = 1;
  int delta_months = 0;             // 0 = mixed horizons
  int64_t steps_completed = 0;
  double threshold = 0.5;
  double default_threshold = 0.5;
  int64_t threshold_window = 500;
  std::vector<double> tracker_history;
  std::string config_json;          // training config, verbatim
  std::string conventions = "same-padding convs; nearest-neighbor upsampling; skip concatenation";
};

void save_checkpoint(const std::filesystem::path& path, torch::nn::Module& net,
                     const CheckpointMeta& meta);
CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path);
void load_checkpoint_weights(const std::filesystem::path& path, torch::nn::Module& net);

/// One line of the JSON-lines training log.
struct StepRecord {
  int64_t step = 0;
  double loss = 0.0;
  double loss_time = 0.0;
  double loss_binary = 0.0;
  double lr = 0.0;
  double threshold = 0.5;
};

struct TrainReport {
  std::filesystem::path checkpoint;       // final weights
  std::filesystem::path best_checkpoint;  // empty unless val evaluation ran
  double final_threshold = 0.5;
  double best_val_f1 = -1.0;
  std::vector<StepRecord> log;
};

/// Trainers write model.pt (+ sidecar), log.jsonl, and optionally best.pt to
/// out_dir. A non-finite loss aborts with the last periodic checkpoint
/// retained on disk. Runs are bit-deterministic for a fixed config and seed.
TrainReport train_detector(const std::vector<PatchArchive>& train_archives,
                           const DetectTrainConfig& config,
                           const std::filesystem::path& out_dir,
                           const PatchArchive* val = nullptr);

TrainReport train_forecaster(const PatchArchive& train_archive, const ForecastTrainConfig& config,
                             const std::filesystem::path& out_dir,
                             const PatchArchive* val = nullptr);

TrainReport train_timerange(const PatchArchive& train_archive, const ForecastTrainConfig& config,
                            const std::filesystem::path& out_dir,
                            const PatchArchive* val = nullptr);

/// change = month map in [1, horizon]; early = month map in [1, boundary].
/// Both uint8 with the month map's shape.
struct TimeRangeLabels {
  torch::Tensor change;
  torch::Tensor early;
};
TimeRangeLabels timerange_labels(const torch::Tensor& first_change_maps, int early_boundary = 12,
                                 int horizon = 24);

/// Float batch (plus labels) for archive rows, augmented when enabled.
/// Exposed for tests; the trainers build on it.
SampleBatch gather_batch(const PatchArchive& archive, const std::vector<int64_t>& indices,
                         const AugmentConfig& augment, Rng& rng);

}  // namespace ucast
