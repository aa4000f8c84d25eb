#include "ucast/training.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <utility>

#include <json.hpp>

#include "ucast/evaluation.hpp"
#include "ucast/losses.hpp"
#include "ucast/sampling.hpp"
#include "ucast/thresholding.hpp"

namespace ucast {

namespace {

using nlohmann::json;

json backbone_json(const BackboneConfig& b) {
  return json{{"encoder_scale", b.encoder_scale},
              {"feature_dim", b.feature_dim},
              {"input_channels", b.input_channels}};
}

BackboneConfig backbone_from_json(const json& j) {
  BackboneConfig b;
  b.encoder_scale = j.at("encoder_scale").get<std::string>();
  b.feature_dim = j.at("feature_dim").get<int>();
  b.input_channels = j.at("input_channels").get<int>();
  return b;
}

json augment_json(const AugmentConfig& a) {
  return json{{"crop", a.crop},
              {"affine", a.affine},
              {"mirror", a.mirror},
              {"jitter", a.jitter},
              {"crop_pad_px", a.crop_pad_px},
              {"max_rotate_degrees", a.max_rotate_degrees},
              {"max_translate_fraction", a.max_translate_fraction},
              {"scale_min", a.scale_min},
              {"scale_max", a.scale_max},
              {"brightness", a.brightness},
              {"contrast", a.contrast},
              {"saturation", a.saturation}};
}

std::string detect_config_json(const DetectTrainConfig& c) {
  json j{{"task", "detect"},
         {"backbone", backbone_json(c.backbone)},
         {"deltas", c.deltas},
         {"steps", c.steps},
         {"batch_size", c.batch_size},
         {"lr", c.lr},
         {"sampler_a", c.sampler_a},
         {"threshold_window", c.threshold_window},
         {"default_threshold", c.default_threshold},
         {"log_every", c.log_every},
         {"checkpoint_every", c.checkpoint_every},
         {"eval_every", c.eval_every},
         {"augment", augment_json(c.augment)},
         {"seed", c.seed}};
  return j.dump();
}

std::string forecast_config_json(const ForecastTrainConfig& c, const std::string& task) {
  json j{{"task", task},
         {"backbone", backbone_json(c.backbone)},
         {"delta_months", c.delta_months},
         {"freeze_steps", c.freeze_steps},
         {"finetune_steps", c.finetune_steps},
         {"batch_size", c.batch_size},
         {"lr_frozen", c.lr_frozen},
         {"lr_finetune", c.lr_finetune},
         {"sampler_a", c.sampler_a},
         {"threshold_window", c.threshold_window},
         {"default_threshold", c.default_threshold},
         {"lambda_mix", c.lambda_mix},
         {"early_boundary", c.early_boundary},
         {"horizon", c.horizon},
         {"log_every", c.log_every},
         {"checkpoint_every", c.checkpoint_every},
         {"eval_every", c.eval_every},
         {"augment", augment_json(c.augment)},
         {"seed", c.seed},
         {"init", c.init}};
  return j.dump();
}

void write_log_line(std::ofstream& out, const StepRecord& r) {
  json j{{"step", r.step},
         {"loss", r.loss},
         {"loss_time", r.loss_time},
         {"loss_binary", r.loss_binary},
         {"lr", r.lr},
         {"tracked_threshold", r.threshold}};
  out << j.dump() << "\n";
  out.flush();
}

void tracker_update(MovingThresholdTracker& tracker, const torch::Tensor& probs,
                    const torch::Tensor& labels) {
  auto p = probs.reshape(-1).to(torch::kFloat32).contiguous();
  auto y = labels.reshape(-1).to(torch::kUInt8).contiguous();
  std::vector<float> scores(p.data_ptr<float>(), p.data_ptr<float>() + p.numel());
  std::vector<std::uint8_t> truth(y.data_ptr<std::uint8_t>(),
                                  y.data_ptr<std::uint8_t>() + y.numel());
  tracker.update(scores, truth);
}

std::filesystem::path sidecar_path(std::filesystem::path p) {
  p.replace_extension(".json");
  return p;
}

void abort_on_nonfinite(double loss, const char* trainer, std::int64_t step) {
  if (std::isfinite(loss)) return;
  throw std::runtime_error(std::string(trainer) + ": non-finite loss at step " +
                           std::to_string(step) + "; last periodic checkpoint retained");
}

// Loads the init checkpoint's backbone into dst and names where it came from.
std::string seed_backbone(const std::string& init_path, ForecastNet dst,
                          const BackboneConfig& expect) {
  auto meta = load_checkpoint_meta(init_path);
  require(meta.backbone.encoder_scale == expect.encoder_scale &&
              meta.backbone.feature_dim == expect.feature_dim &&
              meta.backbone.input_channels == expect.input_channels,
          "init checkpoint backbone does not match the configured backbone");
  if (meta.task == "detect") {
    ChangeDetector src(meta.backbone);
    load_checkpoint_weights(init_path, *src);
    transfer_backbone(dst->backbone, src->backbone);
    return "stage1";
  }
  ForecastNet src(meta.backbone, meta.out_logits);
  load_checkpoint_weights(init_path, *src);
  transfer_backbone(dst->backbone, src->backbone);
  return "external";
}

}  // namespace

void DetectTrainConfig::validate() const {
  backbone.validate();
  for (int d : deltas) require(d >= 1, "detect config: deltas must be >= 1");
  require(steps >= 1, "detect config: steps must be >= 1");
  require(batch_size >= 1, "detect config: batch_size must be >= 1");
  require(lr > 0.0, "detect config: lr must be positive");
  require(sampler_a >= 0.0, "detect config: sampler_a must be >= 0");
  require(threshold_window >= 1, "detect config: threshold_window must be >= 1");
  require(default_threshold >= 0.0 && default_threshold <= 1.0,
          "detect config: default_threshold must lie in [0, 1]");
  require(log_every >= 0 && checkpoint_every >= 0 && eval_every >= 0,
          "detect config: cadences must be >= 0");
  augment.validate();
}

void ForecastTrainConfig::validate() const {
  backbone.validate();
  require(delta_months >= 1, "forecast config: delta_months must be >= 1");
  require(freeze_steps >= 0 && finetune_steps >= 0 && freeze_steps + finetune_steps >= 1,
          "forecast config: need at least one training step across the two phases");
  require(batch_size >= 1, "forecast config: batch_size must be >= 1");
  require(lr_frozen > 0.0 && lr_finetune > 0.0, "forecast config: learning rates must be positive");
  require(sampler_a >= 0.0, "forecast config: sampler_a must be >= 0");
  require(threshold_window >= 1, "forecast config: threshold_window must be >= 1");
  require(default_threshold >= 0.0 && default_threshold <= 1.0,
          "forecast config: default_threshold must lie in [0, 1]");
  require(lambda_mix >= 0.0, "forecast config: lambda_mix must be >= 0");
  require(horizon >= 1, "forecast config: horizon must be >= 1");
  require(early_boundary >= 1 && early_boundary <= horizon,
          "forecast config: need 1 <= early_boundary <= horizon");
  require(log_every >= 0 && checkpoint_every >= 0 && eval_every >= 0,
          "forecast config: cadences must be >= 0");
  augment.validate();
}

void save_checkpoint(const std::filesystem::path& path, torch::nn::Module& net,
                     const CheckpointMeta& meta) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  net.save(archive);
  archive.save_to(path.string());

  json j{{"task", meta.task},
         {"provenance", meta.provenance},
         {"backbone", backbone_json(meta.backbone)},
         {"out_logits", meta.out_logits},
         {"delta_months", meta.delta_months},
         {"steps_completed", meta.steps_completed},
         {"threshold", meta.threshold},
         {"default_threshold", meta.default_threshold},
         {"threshold_window", meta.threshold_window},
         {"tracker_history", meta.tracker_history},
         {"config_json", meta.config_json},
         {"conventions", meta.conventions}};
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  require(out.good(), "save_checkpoint: cannot write sidecar next to " + path.string());
  out << j.dump(2) << "\n";
}

CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path) {
  auto sidecar = sidecar_path(path);
  std::ifstream in(sidecar);
  require(in.good(), "load_checkpoint_meta: missing sidecar " + sidecar.string());
  CheckpointMeta meta;
  try {
    json j = json::parse(in);
    meta.task = j.at("task").get<std::string>();
    meta.provenance = j.at("provenance").get<std::string>();
    meta.backbone = backbone_from_json(j.at("backbone"));
    meta.out_logits = j.at("out_logits").get<int>();
    meta.delta_months = j.at("delta_months").get<int>();
    meta.steps_completed = j.at("steps_completed").get<std::int64_t>();
    meta.threshold = j.at("threshold").get<double>();
    meta.default_threshold = j.at("default_threshold").get<double>();
    meta.threshold_window = j.at("threshold_window").get<std::int64_t>();
    meta.tracker_history = j.at("tracker_history").get<std::vector<double>>();
    meta.config_json = j.at("config_json").get<std::string>();
    meta.conventions = j.at("conventions").get<std::string>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed checkpoint sidecar " + sidecar.string() + ": " +
                                e.what());
  }
  return meta;
}

void load_checkpoint_weights(const std::filesystem::path& path, torch::nn::Module& net) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  net.load(archive);
}

TimeRangeLabels timerange_labels(const torch::Tensor& first_change_maps, int early_boundary,
                                 int horizon) {
  require(first_change_maps.defined(), "timerange_labels: month map is undefined");
  require(early_boundary >= 1 && early_boundary <= horizon,
          "timerange_labels: need 1 <= early_boundary <= horizon");
  auto m = first_change_maps.to(torch::kInt32);
  TimeRangeLabels out;
  out.change = (m.ge(1) & m.le(horizon)).to(torch::kUInt8);
  out.early = (m.ge(1) & m.le(early_boundary)).to(torch::kUInt8);
  return out;
}

SampleBatch gather_batch(const PatchArchive& archive, const std::vector<int64_t>& indices,
                         const AugmentConfig& augment, Rng& rng) {
  require(!indices.empty(), "gather_batch: indices must be non-empty");
  for (auto i : indices)
    require(i >= 0 && i < archive.n(), "gather_batch: index out of range");
  auto idx = torch::tensor(indices, torch::kInt64);
  SampleBatch b;
  b.images_t0 = archive.images_t0.index_select(0, idx).to(torch::kFloat32).div(255.0);
  if (archive.images_t1.defined())
    b.images_t1 = archive.images_t1.index_select(0, idx).to(torch::kFloat32).div(255.0);
  b.change_masks = archive.change_masks.index_select(0, idx);
  if (archive.first_change_maps.defined())
    b.first_change_maps = archive.first_change_maps.index_select(0, idx).to(torch::kInt32);
  if (augment.any()) b = augment_batch(b, augment, rng);
  return b;
}

TrainReport train_detector(const std::vector<PatchArchive>& train_archives,
                           const DetectTrainConfig& config,
                           const std::filesystem::path& out_dir, const PatchArchive* val) {
  config.validate();
  std::vector<const PatchArchive*> archives;
  if (config.deltas.empty()) {
    for (const auto& a : train_archives) archives.push_back(&a);
  } else {
    for (int d : config.deltas) {
      const PatchArchive* found = nullptr;
      for (const auto& a : train_archives)
        if (a.delta_months == d) found = &a;
      require(found != nullptr,
              "train_detector: no archive for range " + std::to_string(d) + " months");
      archives.push_back(found);
    }
  }
  require(!archives.empty(), "train_detector: no training archives");
  for (const auto* a : archives) require(a->n() > 0, "train_detector: empty archive");

  std::filesystem::create_directories(out_dir);
  torch::manual_seed(config.seed);
  ChangeDetector net(config.backbone);
  net->train();
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.lr));

  // One global row space across the mixed-range archives.
  std::vector<int64_t> counts;
  std::vector<std::pair<std::size_t, int64_t>> flat;
  for (std::size_t ai = 0; ai < archives.size(); ++ai) {
    for (int64_t r = 0; r < archives[ai]->n(); ++r) {
      counts.push_back(archives[ai]->n_change[static_cast<std::size_t>(r)]);
      flat.emplace_back(ai, r);
    }
  }
  ChangeWeightedSampler sampler(counts, config.sampler_a);
  Rng sampler_rng(derive_seed(config.seed, "sampler"));
  Rng augment_rng(derive_seed(config.seed, "augment"));
  MovingThresholdTracker tracker(config.default_threshold, config.threshold_window,
                                 derive_seed(config.seed, "threshold"));

  std::ofstream log_file(out_dir / "log.jsonl", std::ios::trunc);
  require(log_file.good(), "train_detector: cannot write log in " + out_dir.string());
  TrainReport report;
  const auto model_path = out_dir / "model.pt";
  const auto best_path = out_dir / "best.pt";

  auto meta_for = [&](int64_t steps_done) {
    CheckpointMeta m;
    m.task = "detect";
    m.provenance = "scratch";
    m.backbone = config.backbone;
    m.out_logits = 1;
    m.delta_months = archives.size() == 1 ? archives.front()->delta_months : 0;
    m.steps_completed = steps_done;
    m.threshold = tracker.current();
    m.default_threshold = config.default_threshold;
    m.threshold_window = config.threshold_window;
    m.tracker_history = tracker.history();
    m.config_json = detect_config_json(config);
    return m;
  };

  for (int64_t step = 1; step <= config.steps; ++step) {
    auto draws = sampler.draw_batch(sampler_rng, config.batch_size);
    std::vector<torch::Tensor> x0s, x1s, ms;
    x0s.reserve(draws.size());
    x1s.reserve(draws.size());
    ms.reserve(draws.size());
    for (auto d : draws) {
      const auto& [ai, row] = flat[static_cast<std::size_t>(d)];
      x0s.push_back(archives[ai]->images_t0[row]);
      x1s.push_back(archives[ai]->images_t1[row]);
      ms.push_back(archives[ai]->change_masks[row]);
    }
    SampleBatch b;
    b.images_t0 = torch::stack(x0s).to(torch::kFloat32).div(255.0);
    b.images_t1 = torch::stack(x1s).to(torch::kFloat32).div(255.0);
    b.change_masks = torch::stack(ms);
    if (config.augment.any()) b = augment_batch(b, config.augment, augment_rng);

    auto logits = net->forward(b.images_t0, b.images_t1).squeeze(1);
    auto loss = forecast_loss(logits, b.change_masks);
    const double loss_v = loss.item<double>();
    abort_on_nonfinite(loss_v, "train_detector", step);
    opt.zero_grad();
    loss.backward();
    opt.step();

    {
      torch::NoGradGuard guard;
      tracker_update(tracker, torch::sigmoid(logits.detach()), b.change_masks);
    }

    if (config.log_every > 0 && (step % config.log_every == 0 || step == config.steps)) {
      StepRecord rec{step, loss_v, 0.0, loss_v, config.lr, tracker.current()};
      report.log.push_back(rec);
      write_log_line(log_file, rec);
    }
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        step != config.steps) {
      save_checkpoint(model_path, *net, meta_for(step));
    }
    if (val != nullptr && config.eval_every > 0 &&
        (step % config.eval_every == 0 || step == config.steps)) {
      auto r = evaluate_detector(net, *val, tracker.current());
      net->train();
      if (r.metrics.f1 > report.best_val_f1) {
        report.best_val_f1 = r.metrics.f1;
        save_checkpoint(best_path, *net, meta_for(step));
        report.best_checkpoint = best_path;
      }
    }
  }

  save_checkpoint(model_path, *net, meta_for(config.steps));
  report.checkpoint = model_path;
  report.final_threshold = tracker.current();
  return report;
}

namespace {

// Shared two-phase loop for the single-image trainers; `timing` switches
// between the one-logit change objective and the three-logit combined one.
TrainReport train_single_image(const PatchArchive& train_archive,
                               const ForecastTrainConfig& config,
                               const std::filesystem::path& out_dir, const PatchArchive* val,
                               bool timing) {
  config.validate();
  require(train_archive.n() > 0, "train: empty archive");
  if (!timing) {
    require(train_archive.delta_months == config.delta_months,
            "train_forecaster: archive range does not match delta_months");
  } else {
    require(train_archive.first_change_maps.defined(),
            "train_timerange: archive has no first-change month maps");
  }

  std::filesystem::create_directories(out_dir);
  torch::manual_seed(config.seed);
  const int out_logits = timing ? 3 : 1;
  ForecastNet net(config.backbone, out_logits);
  std::string provenance = "scratch";
  if (!config.init.empty()) provenance = seed_backbone(config.init, net, config.backbone);

  PatchArchive view = train_archive;
  view.images_t1 = torch::Tensor();  // single-image task; skip augmenting t1
  if (!timing) view.first_change_maps = torch::Tensor();

  ChangeWeightedSampler sampler(view.n_change, config.sampler_a);
  Rng sampler_rng(derive_seed(config.seed, "sampler"));
  Rng augment_rng(derive_seed(config.seed, "augment"));
  MovingThresholdTracker tracker(config.default_threshold, config.threshold_window,
                                 derive_seed(config.seed, "threshold"));
  LossConfig loss_config;
  loss_config.lambda_mix = config.lambda_mix;

  const char* trainer = timing ? "train_timerange" : "train_forecaster";
  std::ofstream log_file(out_dir / "log.jsonl", std::ios::trunc);
  require(log_file.good(), std::string(trainer) + ": cannot write log in " + out_dir.string());
  TrainReport report;
  const auto model_path = out_dir / "model.pt";
  const auto best_path = out_dir / "best.pt";

  const int64_t total_steps = config.freeze_steps + config.finetune_steps;
  bool frozen = config.freeze_steps > 0;
  net->train();
  set_backbone_frozen(net, frozen);
  std::unique_ptr<torch::optim::Adam> opt;
  if (frozen) {
    opt = std::make_unique<torch::optim::Adam>(net->head->parameters(),
                                               torch::optim::AdamOptions(config.lr_frozen));
  } else {
    opt = std::make_unique<torch::optim::Adam>(net->parameters(),
                                               torch::optim::AdamOptions(config.lr_finetune));
  }

  auto meta_for = [&](int64_t steps_done) {
    CheckpointMeta m;
    m.task = timing ? "timerange" : "forecast";
    m.provenance = provenance;
    m.backbone = config.backbone;
    m.out_logits = out_logits;
    m.delta_months = train_archive.delta_months;
    m.steps_completed = steps_done;
    m.threshold = tracker.current();
    m.default_threshold = config.default_threshold;
    m.threshold_window = config.threshold_window;
    m.tracker_history = tracker.history();
    m.config_json = forecast_config_json(config, m.task);
    return m;
  };

  for (int64_t step = 1; step <= total_steps; ++step) {
    if (frozen && step == config.freeze_steps + 1) {
      // Fine-tuning starts clean: everything trainable, fresh optimizer
      // state, and a threshold tracker without frozen-phase memory.
      frozen = false;
      set_backbone_frozen(net, false);
      opt = std::make_unique<torch::optim::Adam>(net->parameters(),
                                                 torch::optim::AdamOptions(config.lr_finetune));
      tracker.reset();
    }
    const double lr_now = frozen ? config.lr_frozen : config.lr_finetune;

    auto rows = sampler.draw_batch(sampler_rng, config.batch_size);
    auto b = gather_batch(view, rows, config.augment, augment_rng);

    double loss_v = 0.0, time_v = 0.0, binary_v = 0.0;
    if (!timing) {
      auto logits = net->forward(b.images_t0).squeeze(1);
      auto loss = forecast_loss(logits, b.change_masks);
      loss_v = loss.item<double>();
      binary_v = loss_v;
      abort_on_nonfinite(loss_v, trainer, step);
      opt->zero_grad();
      loss.backward();
      opt->step();
      torch::NoGradGuard guard;
      tracker_update(tracker, torch::sigmoid(logits.detach()), b.change_masks);
    } else {
      auto logits = net->forward(b.images_t0);
      auto q_e = logits.select(1, 0);
      auto q_l = logits.select(1, 1);
      auto q_0 = logits.select(1, 2);
      auto labels = timerange_labels(b.first_change_maps, config.early_boundary, config.horizon);
      auto loss = combined_loss(q_e, q_l, q_0, labels.early, labels.change, loss_config);
      loss_v = loss.total.item<double>();
      time_v = loss.time.item<double>();
      binary_v = loss.binary.item<double>();
      abort_on_nonfinite(loss_v, trainer, step);
      opt->zero_grad();
      loss.total.backward();
      opt->step();
      torch::NoGradGuard guard;
      auto probs = timerange_probs(q_e.detach(), q_l.detach(), q_0.detach());
      tracker_update(tracker, probs.p_c, labels.change);
    }

    if (config.log_every > 0 && (step % config.log_every == 0 || step == total_steps)) {
      StepRecord rec{step, loss_v, time_v, binary_v, lr_now, tracker.current()};
      report.log.push_back(rec);
      write_log_line(log_file, rec);
    }
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        step != total_steps) {
      save_checkpoint(model_path, *net, meta_for(step));
    }
    if (val != nullptr && config.eval_every > 0 &&
        (step % config.eval_every == 0 || step == total_steps)) {
      double score = -1.0;
      if (!timing) {
        score = evaluate_forecaster(net, *val, tracker.current()).metrics.f1;
      } else {
        auto r = evaluate_timerange(net, *val, tracker.current(), config.early_boundary,
                                    config.horizon);
        score = r.applicable() ? r.af1() : r.change.f1;
      }
      net->train();
      set_backbone_frozen(net, frozen);
      if (score > report.best_val_f1) {
        report.best_val_f1 = score;
        save_checkpoint(best_path, *net, meta_for(step));
        report.best_checkpoint = best_path;
      }
    }
  }

  save_checkpoint(model_path, *net, meta_for(total_steps));
  report.checkpoint = model_path;
  report.final_threshold = tracker.current();
  return report;
}

}  // namespace

TrainReport train_forecaster(const PatchArchive& train_archive, const ForecastTrainConfig& config,
                             const std::filesystem::path& out_dir, const PatchArchive* val) {
  return train_single_image(train_archive, config, out_dir, val, false);
}

TrainReport train_timerange(const PatchArchive& train_archive, const ForecastTrainConfig& config,
                            const std::filesystem::path& out_dir, const PatchArchive* val) {
  return train_single_image(train_archive, config, out_dir, val, true);
}

}  // namespace ucast
