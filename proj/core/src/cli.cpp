#include "ucast/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <ATen/Parallel.h>
#include <torch/torch.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "ucast/augment.hpp"
#include "ucast/common.hpp"
#include "ucast/dataset.hpp"
#include "ucast/evaluation.hpp"
#include "ucast/network.hpp"
#include "ucast/patch_store.hpp"
#include "ucast/raster_io.hpp"
#include "ucast/svg_plot.hpp"
#include "ucast/synth.hpp"
#include "ucast/thresholding.hpp"
#include "ucast/training.hpp"

namespace ucast {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config plumbing. Each subcommand owns a defaults object that doubles as the
// schema: unknown keys are rejected, and every value is coerced to the type
// of its default. Precedence: defaults < --config file < --set < flags.

std::vector<std::string> split_string(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string::npos ? pos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

json coerce_value(const json& schema, const json& value, const std::string& path) {
  const std::string where = path.empty() ? "<root>" : path;
  if (schema.is_object()) {
    require(value.is_object(), "config key '" + where + "' must be an object");
    json out = schema;
    for (const auto& [k, v] : value.items()) {
      require(schema.contains(k),
              "unknown config key: " + (path.empty() ? k : path + "." + k));
      out[k] = coerce_value(schema.at(k), v, path.empty() ? k : path + "." + k);
    }
    return out;
  }
  if (schema.is_null()) {  // optional number (e.g. plot axis bounds)
    require(value.is_null() || value.is_number(),
            "config key '" + where + "' must be a number or null");
    return value;
  }
  if (schema.is_boolean()) {
    require(value.is_boolean(), "config key '" + where + "' must be a boolean");
    return value;
  }
  if (schema.is_string()) {
    require(value.is_string(), "config key '" + where + "' must be a string");
    return value;
  }
  if (schema.is_number_integer()) {
    if (value.is_number_integer()) return value;
    if (value.is_number_float()) {
      const double d = value.get<double>();
      require(d == std::floor(d) && std::abs(d) <= 9.0e18,
              "config key '" + where + "' must be an integer");
      return static_cast<std::int64_t>(d);
    }
    throw std::invalid_argument("config key '" + where + "' must be an integer");
  }
  if (schema.is_number_float()) {
    require(value.is_number(), "config key '" + where + "' must be a number");
    return value.get<double>();
  }
  if (schema.is_array()) {
    require(value.is_array(), "config key '" + where + "' must be an array");
    return value;
  }
  throw std::invalid_argument("config key '" + where + "' has an unsupported schema type");
}

void apply_dotted(json& cfg, const json& schema, const std::string& key, const json& value) {
  const auto parts = split_string(key, '.');
  const json* s = &schema;
  json* c = &cfg;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require(!parts[i].empty(), "empty segment in config key '" + key + "'");
    require(s->is_object() && s->contains(parts[i]), "unknown config key: " + key);
    s = &s->at(parts[i]);
    if (i + 1 < parts.size()) {
      c = &(*c)[parts[i]];
    } else {
      (*c)[parts[i]] = coerce_value(*s, value, key);
    }
  }
}

struct CommandSpec {
  CLI::App* cmd = nullptr;
  std::string name;
  json defaults;
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, json>> overrides;
  std::function<int(const json&)> run;
};

json resolve_config(const CommandSpec& spec) {
  json cfg = spec.defaults;
  if (!spec.config_file.empty()) {
    std::ifstream in(spec.config_file);
    require(in.good(), "cannot open config file: " + spec.config_file);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw std::invalid_argument("malformed config file " + spec.config_file + ": " + e.what());
    }
    // A run manifest carries its config under "config"; accept it directly so
    // any finished run can be replayed via --config manifest.json.
    if (file.is_object() && file.contains("command") && file.contains("config")) {
      const auto cmd = file.at("command").get<std::string>();
      require(cmd == spec.name,
              "manifest " + spec.config_file + " is for command '" + cmd + "', not '" +
                  spec.name + "'");
      file = file.at("config");
    }
    cfg = coerce_value(spec.defaults, file, "");
  }
  for (const auto& s : spec.sets) {
    const auto eq = s.find('=');
    require(eq != std::string::npos && eq > 0,
            "--set expects key.path=value, got '" + s + "'");
    const auto key = s.substr(0, eq);
    const auto raw = s.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;  // unquoted strings are fine on the command line
    }
    apply_dotted(cfg, spec.defaults, key, value);
  }
  for (const auto& [key, value] : spec.overrides) apply_dotted(cfg, spec.defaults, key, value);
  return cfg;
}

// ---------------------------------------------------------------------------
// Shared helpers.

std::string get_str(const json& cfg, const char* key) { return cfg.at(key).get<std::string>(); }
std::int64_t get_int(const json& cfg, const char* key) { return cfg.at(key).get<std::int64_t>(); }
double get_real(const json& cfg, const char* key) { return cfg.at(key).get<double>(); }
bool get_bool(const json& cfg, const char* key) { return cfg.at(key).get<bool>(); }

std::string data_root_or_env(std::string value, const std::string& what) {
  if (value.empty()) {
    if (const char* env = std::getenv("UCAST_DATA_ROOT")) value = env;
  }
  require(!value.empty(), what + " is required (flag, config key, or UCAST_DATA_ROOT)");
  return value;
}

std::vector<int> int_list(const json& a, const std::string& what) {
  require(a.is_array(), what + " must be an array of integers");
  std::vector<int> out;
  for (const auto& v : a) {
    require(v.is_number_integer(), what + " entries must be integers");
    out.push_back(v.get<int>());
  }
  return out;
}

json parse_int_list_arg(const std::string& s, const std::string& flag) {
  json out = json::array();
  for (const auto& part : split_string(s, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(part, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    require(used == part.size() && !part.empty(),
            flag + " expects a comma-separated integer list, got '" + s + "'");
    out.push_back(v);
  }
  require(!out.empty(), flag + " expects at least one value");
  return out;
}

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

AugmentConfig augment_from_json(const json& j) {
  AugmentConfig a;
  a.crop = j.at("crop").get<bool>();
  a.affine = j.at("affine").get<bool>();
  a.mirror = j.at("mirror").get<bool>();
  a.jitter = j.at("jitter").get<bool>();
  a.crop_pad_px = j.at("crop_pad_px").get<int>();
  a.max_rotate_degrees = j.at("max_rotate_degrees").get<double>();
  a.max_translate_fraction = j.at("max_translate_fraction").get<double>();
  a.scale_min = j.at("scale_min").get<double>();
  a.scale_max = j.at("scale_max").get<double>();
  a.brightness = j.at("brightness").get<double>();
  a.contrast = j.at("contrast").get<double>();
  a.saturation = j.at("saturation").get<double>();
  return a;
}

json augment_defaults() {
  const AugmentConfig a;
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

void apply_determinism(const json& cfg) {
  if (get_bool(cfg, "deterministic")) at::set_num_threads(1);
}

json file_hash(const fs::path& p) {
  require(fs::is_regular_file(p), "missing file: " + p.string());
  return json{{"path", p.string()}, {"sha256", sha256_file(p)}};
}

// Content hash of a directory tree: sha256 over sorted "relpath:sha256(file)"
// lines. The run's own manifest.json is excluded so writing the manifest does
// not disturb the hash its next consumer computes.
json tree_hash(const fs::path& dir) {
  require(fs::is_directory(dir), "missing directory: " + dir.string());
  std::vector<std::string> lines;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    lines.push_back(rel + ":" + sha256_file(entry.path()));
  }
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) {
    all += l;
    all += '\n';
  }
  return json{{"path", dir.string()},
              {"n_files", lines.size()},
              {"sha256", sha256_hex(all.data(), all.size())}};
}

fs::path bucket_dir(const fs::path& data, const std::string& split, int delta) {
  return data / "pairs" / ("r" + std::to_string(delta)) / split;
}

void require_bucket(const fs::path& data, const std::string& split, int delta) {
  if (!patch_archive_exists(data, split, delta))
    throw std::invalid_argument("no derived bucket for range " + std::to_string(delta) +
                                " months (expected " +
                                bucket_dir(data, split, delta).string() + ")");
}

// Buckets present under <data>/pairs for one split, ascending by range.
std::vector<int> discover_ranges(const fs::path& data, const std::string& split) {
  std::vector<int> out;
  const auto pairs = data / "pairs";
  if (!fs::is_directory(pairs)) return out;
  for (const auto& entry : fs::directory_iterator(pairs)) {
    if (!entry.is_directory()) continue;
    const auto name = entry.path().filename().string();
    if (name.size() < 2 || name[0] != 'r') continue;
    if (name.find_first_not_of("0123456789", 1) != std::string::npos) continue;
    const int r = std::stoi(name.substr(1));
    if (patch_archive_exists(data, split, r)) out.push_back(r);
  }
  return sorted_unique(out);
}

json seeds_json(std::uint64_t root) {
  return json{{"root", root},
              {"sampler", derive_seed(root, "sampler")},
              {"augment", derive_seed(root, "augment")},
              {"threshold", derive_seed(root, "threshold")}};
}

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    const json& seeds, const json& data_hashes, const json& results,
                    const json& checkpoints) {
  fs::create_directories(out_dir);
  const json m{{"command", command},     {"config", config},   {"seeds", seeds},
               {"data_hashes", data_hashes}, {"results", results}, {"checkpoints", checkpoints}};
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  require(out.good(), "cannot write manifest under " + out_dir.string());
  out << m.dump(2) << "\n";
}

json metrics_json(const BinaryMetrics& m) {
  return json{{"f1", m.f1},
              {"precision", m.precision},
              {"recall", m.recall},
              {"counts",
               {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn}, {"tn", m.counts.tn}}}};
}

json train_results_json(const TrainReport& report, const std::string& provenance) {
  json r{{"final_threshold", report.final_threshold}, {"provenance", provenance}};
  if (!report.log.empty()) r["last_loss"] = report.log.back().loss;
  if (report.best_val_f1 >= 0.0) r["best_val_f1"] = report.best_val_f1;
  return r;
}

json train_checkpoints_json(const TrainReport& report) {
  json c{{"model", report.checkpoint.string()}};
  if (!report.best_checkpoint.empty()) c["best"] = report.best_checkpoint.string();
  return c;
}

void print_train_summary(const TrainReport& report) {
  std::cout << "final checkpoint: " << report.checkpoint.string() << "\n";
  std::cout << "tracked threshold: " << report.final_threshold << "\n";
  if (!report.best_checkpoint.empty())
    std::cout << "best val F1: " << report.best_val_f1 << " (" << report.best_checkpoint.string()
              << ")\n";
}

// ---------------------------------------------------------------------------
// synth

json synth_defaults() {
  const SynthConfig c;
  return json{{"out", ""},
              {"seed", 1},
              {"n_locations", c.n_locations},
              {"image_size", c.image_size},
              {"n_months", c.n_months},
              {"buildings_per_month", c.buildings_per_month},
              {"precursor_lead", c.precursor_lead},
              {"initial_buildings", c.initial_buildings},
              {"min_building_px", c.min_building_px},
              {"max_building_px", c.max_building_px},
              {"start_date", c.start_date.str()},
              {"continents", c.continents},
              {"deterministic", false}};
}

int cmd_synth(const json& cfg) {
  apply_determinism(cfg);
  const auto out = get_str(cfg, "out");
  require(!out.empty(), "synth: --out is required");

  SynthConfig sc;
  sc.n_locations = static_cast<int>(get_int(cfg, "n_locations"));
  sc.image_size = static_cast<int>(get_int(cfg, "image_size"));
  sc.n_months = static_cast<int>(get_int(cfg, "n_months"));
  sc.buildings_per_month = get_real(cfg, "buildings_per_month");
  sc.precursor_lead = static_cast<int>(get_int(cfg, "precursor_lead"));
  sc.initial_buildings = static_cast<int>(get_int(cfg, "initial_buildings"));
  sc.min_building_px = static_cast<int>(get_int(cfg, "min_building_px"));
  sc.max_building_px = static_cast<int>(get_int(cfg, "max_building_px"));
  sc.start_date = YearMonth::parse(get_str(cfg, "start_date"));
  sc.continents.clear();
  for (const auto& c : cfg.at("continents")) {
    require(c.is_string(), "continents entries must be strings");
    sc.continents.push_back(c.get<std::string>());
  }
  const auto seed = cfg.at("seed").get<std::uint64_t>();

  const auto locations = synth_generate(sc, seed);
  for (const auto& loc : locations) write_location(out, loc);

  const json results{{"n_locations", locations.size()},
                     {"image_size", sc.image_size},
                     {"n_months", sc.n_months}};
  json hashes = json::object();
  hashes["generated"] = tree_hash(out);
  write_manifest(out, "synth", cfg, json{{"root", seed}}, hashes, results, json::object());
  std::cout << "wrote " << locations.size() << " locations to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// derive

json derive_defaults() {
  return json{{"input", ""},
              {"out", ""},
              {"seed", 1},
              {"ranges", {1, 3, 6, 9, 12, 15, 18, 21, 24}},
              {"fcm_horizon", 24},
              {"deterministic", false}};
}

int cmd_derive(const json& cfg) {
  apply_determinism(cfg);
  const auto input = data_root_or_env(get_str(cfg, "input"), "derive: input root");
  const auto out = get_str(cfg, "out");
  require(!out.empty(), "derive: --out is required");
  const auto ranges = sorted_unique(int_list(cfg.at("ranges"), "ranges"));
  require(!ranges.empty(), "derive: ranges must not be empty");
  for (int r : ranges) require(r >= 1, "derive: ranges must be >= 1 month");
  const int fcm_horizon = static_cast<int>(get_int(cfg, "fcm_horizon"));
  require(fcm_horizon >= 1, "derive: fcm_horizon must be >= 1");
  const auto seed = cfg.at("seed").get<std::uint64_t>();

  json cfg_resolved = cfg;
  cfg_resolved["input"] = input;
  cfg_resolved["ranges"] = ranges;

  const auto dirs = list_locations(input);
  require(!dirs.empty(), "derive: no locations under " + input);
  std::vector<LocationSeries> series;
  std::vector<std::pair<std::string, std::string>> failures;
  for (const auto& d : dirs) {
    try {
      series.push_back(read_location(d));
    } catch (const std::exception& e) {
      failures.emplace_back(d.filename().string(), e.what());
    }
  }
  if (!failures.empty()) {
    std::cerr << "derive: " << failures.size() << " of " << dirs.size()
              << " locations failed:\n";
    for (const auto& [id, msg] : failures) std::cerr << "  " << id << ": " << msg << "\n";
  }
  if (series.empty()) throw std::runtime_error("derive: no readable locations under " + input);

  std::vector<std::pair<std::string, std::string>> membership;
  membership.reserve(series.size());
  for (const auto& s : series) membership.emplace_back(s.location_id, s.continent);
  SplitManifest split;
  try {
    split = make_split(membership, seed);
  } catch (const std::invalid_argument& e) {
    // Too few readable locations because of upstream failures is a runtime
    // problem, not a usage error.
    if (!failures.empty()) throw std::runtime_error(e.what());
    throw;
  }

  fs::create_directories(out);
  {
    std::ofstream sm(fs::path(out) / "split_manifest.json", std::ios::trunc);
    require(sm.good(), "derive: cannot write split manifest under " + out);
    sm << split.to_json().dump(2) << "\n";
  }

  const std::array<std::string, 3> split_names{"train", "val", "test"};
  std::map<std::string, std::vector<LocationSeries>> by_split;
  for (const auto& s : series) by_split[split.assignment.at(s.location_id)].push_back(s);

  std::vector<BucketStats> stats;
  json buckets = json::array();
  for (int r : ranges) {
    BucketStats bs;
    bs.delta_months = r;
    std::int64_t changed_px = 0;
    for (const auto& s : series)
      bs.n_pairs += static_cast<std::int64_t>(enumerate_pairs(s.dates, r).size());
    for (const auto& name : split_names) {
      const auto it = by_split.find(name);
      if (it == by_split.end()) continue;
      auto archive = build_patch_archive(it->second, name, r, fcm_horizon);
      bs.n_patches += archive.n();
      for (auto c : archive.n_change) changed_px += c;
      if (archive.n() > 0) save_patch_archive(out, archive);
    }
    const double px = static_cast<double>(bs.n_patches) * kPatchSize * kPatchSize;
    bs.change_fraction = bs.n_patches > 0 ? static_cast<double>(changed_px) / px : 0.0;
    stats.push_back(bs);
    buckets.push_back(json{{"delta_months", bs.delta_months},
                           {"n_pairs", bs.n_pairs},
                           {"n_patches", bs.n_patches},
                           {"change_fraction", bs.change_fraction}});
    std::cout << "r=" << r << ": " << bs.n_pairs << " pairs, " << bs.n_patches
              << " patches, change fraction " << bs.change_fraction << "\n";
  }
  save_bucket_stats_csv(fs::path(out) / "stats.csv", stats);

  const auto totals = split.totals();
  std::cout << "split train/val/test = " << totals[0] << "/" << totals[1] << "/" << totals[2]
            << "\n";

  const json results{{"locations_read", series.size()},
                     {"locations_failed", failures.size()},
                     {"split_totals", totals},
                     {"buckets", buckets}};
  json hashes = json::object();
  hashes["input"] = tree_hash(input);
  write_manifest(out, "derive", cfg_resolved, json{{"root", seed}}, hashes, results,
                 json::object());
  if (!failures.empty()) return 3;
  return 0;
}

// ---------------------------------------------------------------------------
// train-detect

json train_detect_defaults() {
  return json{{"data", ""},
              {"out", ""},
              {"seed", 1},
              {"encoder", "tiny"},
              {"feature_dim", 16},
              {"ranges", json::array()},  // empty = every derived bucket
              {"steps", 0},               // 0 = 2000 tiny / 20000 full
              {"batch_size", 0},          // 0 = 16
              {"lr", 1e-4},
              {"sampler_a", 50.0},
              {"threshold_window", 500},
              {"default_threshold", 0.5},
              {"log_every", 50},
              {"checkpoint_every", 500},
              {"eval_every", 0},
              {"augment", augment_defaults()},
              {"deterministic", false}};
}

int cmd_train_detect(const json& cfg) {
  apply_determinism(cfg);
  const auto data = data_root_or_env(get_str(cfg, "data"), "train-detect: data root");
  const auto out = get_str(cfg, "out");
  require(!out.empty(), "train-detect: --out is required");

  DetectTrainConfig tc;
  tc.backbone.encoder_scale = get_str(cfg, "encoder");
  tc.backbone.feature_dim = static_cast<int>(get_int(cfg, "feature_dim"));
  tc.steps = get_int(cfg, "steps");
  if (tc.steps == 0) tc.steps = tc.backbone.encoder_scale == "full" ? 20000 : 2000;
  tc.batch_size = get_int(cfg, "batch_size");
  if (tc.batch_size == 0) tc.batch_size = 16;
  tc.lr = get_real(cfg, "lr");
  tc.sampler_a = get_real(cfg, "sampler_a");
  tc.threshold_window = get_int(cfg, "threshold_window");
  tc.default_threshold = get_real(cfg, "default_threshold");
  tc.log_every = get_int(cfg, "log_every");
  tc.checkpoint_every = get_int(cfg, "checkpoint_every");
  tc.eval_every = get_int(cfg, "eval_every");
  tc.augment = augment_from_json(cfg.at("augment"));
  tc.seed = cfg.at("seed").get<std::uint64_t>();

  auto ranges = sorted_unique(int_list(cfg.at("ranges"), "ranges"));
  if (ranges.empty()) ranges = discover_ranges(data, "train");
  require(!ranges.empty(), "train-detect: no derived buckets under " + data);
  for (int r : ranges) require_bucket(data, "train", r);

  std::vector<PatchArchive> archives;
  json hashes = json::object();
  for (int r : ranges) {
    archives.push_back(load_patch_archive(data, "train", r));
    hashes["train_r" + std::to_string(r)] = tree_hash(bucket_dir(data, "train", r));
  }
  std::optional<PatchArchive> val;
  if (tc.eval_every > 0) {
    require_bucket(data, "val", ranges.front());
    val = load_patch_archive(data, "val", ranges.front());
    hashes["val_r" + std::to_string(ranges.front())] =
        tree_hash(bucket_dir(data, "val", ranges.front()));
  }

  json cfg_resolved = cfg;
  cfg_resolved["data"] = data;
  cfg_resolved["ranges"] = ranges;
  cfg_resolved["steps"] = tc.steps;
  cfg_resolved["batch_size"] = tc.batch_size;

  const auto report = train_detector(archives, tc, out, val ? &*val : nullptr);
  const auto meta = load_checkpoint_meta(report.checkpoint);
  write_manifest(out, "train-detect", cfg_resolved, seeds_json(tc.seed), hashes,
                 train_results_json(report, meta.provenance), train_checkpoints_json(report));
  print_train_summary(report);
  return 0;
}

// ---------------------------------------------------------------------------
// train-forecast / train-timerange

json train_forecast_defaults(bool timing) {
  json j{{"data", ""},
         {"out", ""},
         {"seed", 1},
         {"encoder", "tiny"},
         {"feature_dim", 16},
         {"range", timing ? 24 : 6},
         {"freeze_steps", -1},    // -1 = 500 tiny / 5000 full
         {"finetune_steps", -1},  // -1 = 500 tiny / 5000 full
         {"batch_size", 0},       // 0 = 4 for ranges >= 21, else 16
         {"lr_frozen", 1e-4},
         {"lr_finetune", 1e-5},
         {"sampler_a", 50.0},
         {"threshold_window", 500},
         {"default_threshold", timing ? 0.33 : 0.5},
         {"init", ""},
         {"log_every", 50},
         {"checkpoint_every", 500},
         {"eval_every", 0},
         {"augment", augment_defaults()},
         {"deterministic", false}};
  if (timing) {
    j["lambda_mix"] = 1000.0;
    j["early_boundary"] = 12;
    j["horizon"] = 24;
  }
  return j;
}

int cmd_train_single(const json& cfg, bool timing) {
  apply_determinism(cfg);
  const char* name = timing ? "train-timerange" : "train-forecast";
  const auto data = data_root_or_env(get_str(cfg, "data"), std::string(name) + ": data root");
  const auto out = get_str(cfg, "out");
  require(!out.empty(), std::string(name) + ": --out is required");

  ForecastTrainConfig tc;
  tc.backbone.encoder_scale = get_str(cfg, "encoder");
  tc.backbone.feature_dim = static_cast<int>(get_int(cfg, "feature_dim"));
  tc.delta_months = static_cast<int>(get_int(cfg, "range"));
  const std::int64_t default_phase = tc.backbone.encoder_scale == "full" ? 5000 : 500;
  tc.freeze_steps = get_int(cfg, "freeze_steps");
  if (tc.freeze_steps < 0) tc.freeze_steps = default_phase;
  tc.finetune_steps = get_int(cfg, "finetune_steps");
  if (tc.finetune_steps < 0) tc.finetune_steps = default_phase;
  tc.batch_size = get_int(cfg, "batch_size");
  if (tc.batch_size == 0) tc.batch_size = tc.delta_months >= 21 ? 4 : 16;
  tc.lr_frozen = get_real(cfg, "lr_frozen");
  tc.lr_finetune = get_real(cfg, "lr_finetune");
  tc.sampler_a = get_real(cfg, "sampler_a");
  tc.threshold_window = get_int(cfg, "threshold_window");
  tc.default_threshold = get_real(cfg, "default_threshold");
  tc.init = get_str(cfg, "init");
  tc.log_every = get_int(cfg, "log_every");
  tc.checkpoint_every = get_int(cfg, "checkpoint_every");
  tc.eval_every = get_int(cfg, "eval_every");
  tc.augment = augment_from_json(cfg.at("augment"));
  tc.seed = cfg.at("seed").get<std::uint64_t>();
  if (timing) {
    tc.lambda_mix = get_real(cfg, "lambda_mix");
    tc.early_boundary = static_cast<int>(get_int(cfg, "early_boundary"));
    tc.horizon = static_cast<int>(get_int(cfg, "horizon"));
  }

  require_bucket(data, "train", tc.delta_months);
  const auto train = load_patch_archive(data, "train", tc.delta_months);
  json hashes = json::object();
  hashes["train_r" + std::to_string(tc.delta_months)] =
      tree_hash(bucket_dir(data, "train", tc.delta_months));
  std::optional<PatchArchive> val;
  if (tc.eval_every > 0) {
    require_bucket(data, "val", tc.delta_months);
    val = load_patch_archive(data, "val", tc.delta_months);
    hashes["val_r" + std::to_string(tc.delta_months)] =
        tree_hash(bucket_dir(data, "val", tc.delta_months));
  }
  if (!tc.init.empty()) hashes["init"] = file_hash(tc.init);

  json cfg_resolved = cfg;
  cfg_resolved["data"] = data;
  cfg_resolved["freeze_steps"] = tc.freeze_steps;
  cfg_resolved["finetune_steps"] = tc.finetune_steps;
  cfg_resolved["batch_size"] = tc.batch_size;

  const auto report = timing ? train_timerange(train, tc, out, val ? &*val : nullptr)
                             : train_forecaster(train, tc, out, val ? &*val : nullptr);
  const auto meta = load_checkpoint_meta(report.checkpoint);
  write_manifest(out, name, cfg_resolved, seeds_json(tc.seed), hashes,
                 train_results_json(report, meta.provenance), train_checkpoints_json(report));
  print_train_summary(report);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

json eval_defaults() {
  return json{{"checkpoint", ""},
              {"data", ""},
              {"out", ""},
              {"split", "test"},
              {"ranges", json::array()},  // detect only; empty = every bucket
              {"batch_size", 8},
              {"oracle_threshold", false},
              {"pr_points", 256},
              {"label", ""},
              {"seed", 1},
              {"deterministic", false}};
}

struct OracleSweep {
  double threshold = 0.0;
  double f1 = 0.0;
};

std::optional<OracleSweep> oracle_sweep(const ScoreSet& scores) {
  const auto best = batch_optimal_threshold(scores.scores, scores.labels);
  if (!best) return std::nullopt;
  return OracleSweep{*best, f1_at_threshold(scores.scores, scores.labels, *best)};
}

bool has_positive(const ScoreSet& scores) {
  return std::any_of(scores.labels.begin(), scores.labels.end(),
                     [](uint8_t v) { return v != 0; });
}

int cmd_eval(const json& cfg) {
  apply_determinism(cfg);
  const auto checkpoint = get_str(cfg, "checkpoint");
  require(!checkpoint.empty(), "eval: --checkpoint is required");
  const auto data = data_root_or_env(get_str(cfg, "data"), "eval: data root");
  const auto out = get_str(cfg, "out");
  require(!out.empty(), "eval: --out is required");
  const auto split = get_str(cfg, "split");
  require(split == "train" || split == "val" || split == "test",
          "eval: split must be train, val, or test");
  const auto batch = get_int(cfg, "batch_size");
  const bool oracle = get_bool(cfg, "oracle_threshold");
  const int pr_points = static_cast<int>(get_int(cfg, "pr_points"));
  auto ranges = sorted_unique(int_list(cfg.at("ranges"), "ranges"));

  const auto meta = load_checkpoint_meta(checkpoint);
  json cfg_resolved = cfg;
  cfg_resolved["data"] = data;

  EvalReport report;
  report.label = get_str(cfg, "label").empty() ? meta.task : get_str(cfg, "label");
  json results{{"task", meta.task}, {"threshold", meta.threshold}};
  json hashes = json::object();
  hashes["checkpoint"] = file_hash(checkpoint);

  const bool want_pr = pr_points >= 2;
  ScoreSet curve_scores;  // single-range detect/forecast, or p_c for timerange

  if (meta.task == "detect") {
    ChangeDetector net(meta.backbone);
    load_checkpoint_weights(checkpoint, *net);
    if (ranges.empty()) ranges = discover_ranges(data, split);
    require(!ranges.empty(), "eval: no derived buckets under " + data + " for split " + split);
    json per_range = json::object();
    for (int r : ranges) {
      require_bucket(data, split, r);
      const auto archive = load_patch_archive(data, split, r);
      hashes["data_r" + std::to_string(r)] = tree_hash(bucket_dir(data, split, r));
      const auto res = evaluate_detector(net, archive, meta.threshold, batch);
      report.ranges.push_back(RangeReport{r, res.metrics, meta.threshold});
      per_range[std::to_string(r)] = metrics_json(res.metrics);
      std::cout << "r=" << r << ": F1 " << res.metrics.f1 << " precision "
                << res.metrics.precision << " recall " << res.metrics.recall << " (threshold "
                << meta.threshold << ", " << res.n_samples << " patches)\n";
      if (oracle || (want_pr && ranges.size() == 1)) {
        const auto scores = collect_detect_scores(net, archive, batch);
        if (oracle) {
          if (const auto sweep = oracle_sweep(scores)) {
            per_range[std::to_string(r)]["oracle"] =
                json{{"threshold", sweep->threshold}, {"f1", sweep->f1}};
            std::cout << "  oracle threshold " << sweep->threshold << " -> F1 " << sweep->f1
                      << "\n";
          } else {
            std::cout << "  oracle threshold: no positive labels in this bucket\n";
          }
        }
        if (want_pr && ranges.size() == 1) curve_scores = scores;
      }
    }
    results["ranges"] = per_range;
    cfg_resolved["ranges"] = ranges;
  } else if (meta.task == "forecast" || meta.task == "timerange") {
    const bool timing = meta.task == "timerange";
    const int r = meta.delta_months;
    if (!ranges.empty())
      require(ranges.size() == 1 && ranges.front() == r,
              "eval: checkpoint was trained for range " + std::to_string(r) +
                  " months; pass no ranges or exactly that one");
    ForecastNet net(meta.backbone, timing ? 3 : 1);
    load_checkpoint_weights(checkpoint, *net);
    require_bucket(data, split, r);
    const auto archive = load_patch_archive(data, split, r);
    hashes["data_r" + std::to_string(r)] = tree_hash(bucket_dir(data, split, r));
    cfg_resolved["ranges"] = json::array({r});

    if (!timing) {
      const auto res = evaluate_forecaster(net, archive, meta.threshold, batch);
      report.ranges.push_back(RangeReport{r, res.metrics, meta.threshold});
      results["ranges"] = json::object();
      results["ranges"][std::to_string(r)] = metrics_json(res.metrics);
      std::cout << "r=" << r << ": F1 " << res.metrics.f1 << " precision "
                << res.metrics.precision << " recall " << res.metrics.recall << " (threshold "
                << meta.threshold << ", " << res.n_samples << " patches)\n";
      if (oracle || want_pr) {
        const auto scores = collect_forecast_scores(net, archive, batch);
        if (oracle) {
          if (const auto sweep = oracle_sweep(scores)) {
            results["oracle"] = json{{"threshold", sweep->threshold}, {"f1", sweep->f1}};
            std::cout << "oracle threshold " << sweep->threshold << " -> F1 " << sweep->f1
                      << "\n";
          } else {
            std::cout << "oracle threshold: no positive labels in this bucket\n";
          }
        }
        if (want_pr) curve_scores = scores;
      }
    } else {
      int boundary = 12;
      int horizon = 24;
      try {
        const auto tj = json::parse(meta.config_json);
        boundary = tj.value("early_boundary", boundary);
        horizon = tj.value("horizon", horizon);
      } catch (const json::exception&) {
        // older sidecars without a config blob fall back to the defaults
      }
      const auto tr = evaluate_timerange(net, archive, meta.threshold, boundary, horizon, batch);
      report.timerange = tr;
      report.has_timerange = true;
      report.ranges.push_back(RangeReport{r, tr.change, meta.threshold});
      results["ranges"] = json::object();
      results["ranges"][std::to_string(r)] = metrics_json(tr.change);
      results["timerange"] = json{{"confusion",
                                   {{tr.confusion[0][0], tr.confusion[0][1]},
                                    {tr.confusion[1][0], tr.confusion[1][1]}}},
                                  {"evaluated", tr.evaluated},
                                  {"accuracy", tr.accuracy()},
                                  {"early_f1", tr.early_f1()},
                                  {"late_f1", tr.late_f1()},
                                  {"af1", tr.af1()},
                                  {"early_boundary", boundary},
                                  {"horizon", horizon}};
      std::cout << "change (within " << horizon << " months): F1 " << tr.change.f1
                << " precision " << tr.change.precision << " recall " << tr.change.recall
                << " (threshold " << meta.threshold << ")\n";
      std::cout << "early/late on " << tr.evaluated << " changing pixels: accuracy "
                << tr.accuracy() << ", aF1 " << tr.af1() << "\n";
      std::cout << "              pred early  pred late\n";
      std::cout << "  gt early  " << tr.confusion[0][0] << "  " << tr.confusion[0][1] << "\n";
      std::cout << "  gt late   " << tr.confusion[1][0] << "  " << tr.confusion[1][1] << "\n";
      if (oracle || want_pr) {
        const auto scores = collect_timerange_scores(net, archive, horizon, batch);
        if (oracle) {
          if (const auto sweep = oracle_sweep(scores)) {
            results["oracle"] = json{{"threshold", sweep->threshold}, {"f1", sweep->f1}};
            std::cout << "oracle threshold " << sweep->threshold << " -> change F1 "
                      << sweep->f1 << "\n";
          } else {
            std::cout << "oracle threshold: no positive labels in this bucket\n";
          }
        }
        if (want_pr) curve_scores = scores;
      }
    }
  } else {
    throw std::invalid_argument("eval: unknown checkpoint task '" + meta.task + "'");
  }

  if (!curve_scores.scores.empty() && has_positive(curve_scores))
    report.pr = pr_curve(curve_scores.scores, curve_scores.labels, pr_points);

  emit_plots({report}, out);
  write_manifest(out, "eval", cfg_resolved, json{{"root", cfg.at("seed").get<std::uint64_t>()}},
                 hashes, results, json{{"evaluated", checkpoint}});
  std::cout << "report written to " << (fs::path(out) / "eval_report.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// plot

json plot_defaults() {
  return json{{"inputs", json::array()},
              {"out", ""},
              {"title", ""},
              {"x_label", ""},
              {"y_label", ""},
              {"y_min", nullptr},
              {"y_max", nullptr},
              {"width", 760},
              {"height", 480},
              {"deterministic", false}};
}

int cmd_plot(const json& cfg) {
  apply_determinism(cfg);
  const auto& inputs = cfg.at("inputs");
  require(inputs.is_array() && !inputs.empty(), "plot: at least one --input CSV is required");
  const auto out = get_str(cfg, "out");
  require(!out.empty(), "plot: --out is required");

  CurveSet merged;
  json hashes = json::object();
  int file_index = 0;
  for (const auto& entry : inputs) {
    require(entry.is_string(), "plot: inputs entries must be file paths");
    const auto path = entry.get<std::string>();
    hashes["input" + std::to_string(file_index++)] = file_hash(path);
    const auto curves = load_curves_csv(path);
    for (const auto& [name, points] : curves.series) {
      auto& dst = merged.at(name);
      dst.insert(dst.end(), points.begin(), points.end());
    }
  }

  fs::create_directories(out);
  save_curves_csv(fs::path(out) / "curves.csv", merged);

  PlotOptions options;
  options.title = get_str(cfg, "title");
  options.x_label = get_str(cfg, "x_label");
  options.y_label = get_str(cfg, "y_label");
  options.width = static_cast<int>(get_int(cfg, "width"));
  options.height = static_cast<int>(get_int(cfg, "height"));
  if (cfg.at("y_min").is_number()) options.y_min = cfg.at("y_min").get<double>();
  if (cfg.at("y_max").is_number()) options.y_max = cfg.at("y_max").get<double>();
  write_line_chart_svg(fs::path(out) / "chart.svg", merged, options);

  std::size_t n_points = 0;
  for (const auto& [name, points] : merged.series) n_points += points.size();
  const json results{{"n_series", merged.series.size()}, {"n_points", n_points}};
  write_manifest(out, "plot", cfg, json{{"root", 0}}, hashes, results, json::object());
  std::cout << "wrote " << (fs::path(out) / "chart.svg").string() << " ("
            << merged.series.size() << " series)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Wiring.

CommandSpec& add_command(CLI::App& app, std::deque<CommandSpec>& specs, const std::string& name,
                         const std::string& desc, json defaults,
                         std::function<int(const json&)> run) {
  auto& spec = specs.emplace_back();
  spec.cmd = app.add_subcommand(name, desc);
  spec.name = name;
  spec.defaults = std::move(defaults);
  spec.run = std::move(run);
  spec.cmd->add_option("--config", spec.config_file,
                       "JSON config file; a previous run's manifest.json also works");
  spec.cmd->add_option("--set", spec.sets,
                       "override one config key, e.g. --set augment.crop=false");
  return spec;
}

void opt_str(CommandSpec& s, const std::string& flag, const char* key, const std::string& desc) {
  s.cmd->add_option_function<std::string>(
      flag, [&s, key](const std::string& v) { s.overrides.emplace_back(key, v); }, desc);
}

void opt_int(CommandSpec& s, const std::string& flag, const char* key, const std::string& desc) {
  s.cmd->add_option_function<std::int64_t>(
      flag, [&s, key](const std::int64_t& v) { s.overrides.emplace_back(key, v); }, desc);
}

void opt_real(CommandSpec& s, const std::string& flag, const char* key, const std::string& desc) {
  s.cmd->add_option_function<double>(
      flag, [&s, key](const double& v) { s.overrides.emplace_back(key, v); }, desc);
}

void opt_flag(CommandSpec& s, const std::string& flag, const char* key, const std::string& desc) {
  s.cmd->add_flag_callback(flag, [&s, key]() { s.overrides.emplace_back(key, true); }, desc);
}

void opt_list(CommandSpec& s, const std::string& flag, const char* key, const std::string& desc) {
  s.cmd->add_option_function<std::string>(
      flag,
      [&s, key, flag](const std::string& v) {
        s.overrides.emplace_back(key, parse_int_list_arg(v, flag));
      },
      desc);
}

void common_train_opts(CommandSpec& s) {
  opt_str(s, "--data", "data", "derived-patch root (falls back to UCAST_DATA_ROOT)");
  opt_str(s, "--out", "out", "output directory for checkpoints, log, and manifest");
  opt_int(s, "--seed", "seed", "root seed");
  opt_str(s, "--encoder", "encoder", "backbone scale: tiny or full");
  opt_int(s, "--feature-dim", "feature_dim", "backbone output channels");
  opt_int(s, "--batch-size", "batch_size", "0 picks the task default");
  opt_int(s, "--log-every", "log_every", "steps between log lines");
  opt_int(s, "--checkpoint-every", "checkpoint_every", "steps between periodic checkpoints");
  opt_int(s, "--eval-every", "eval_every", "steps between val evaluations (0 = off)");
  opt_flag(s, "--deterministic", "deterministic", "pin to one thread for bit-stable replay");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"building-footprint change forecasting pipeline"};
  app.require_subcommand(1);
  std::deque<CommandSpec> specs;

  {
    auto& s = add_command(app, specs, "synth", "generate a procedural image/mask world",
                          synth_defaults(), cmd_synth);
    opt_str(s, "--out", "out", "output data root");
    opt_int(s, "--seed", "seed", "world seed");
    opt_int(s, "--locations", "n_locations", "number of locations");
    opt_int(s, "--image-size", "image_size", "raster side in pixels");
    opt_int(s, "--months", "n_months", "series length in months");
    opt_real(s, "--rate", "buildings_per_month", "mean new buildings per location-month");
    opt_int(s, "--lead", "precursor_lead", "months of visible site works before a building");
    opt_flag(s, "--deterministic", "deterministic", "pin to one thread for bit-stable replay");
  }
  {
    auto& s = add_command(app, specs, "derive",
                          "split locations and cut patch buckets for each range",
                          derive_defaults(), cmd_derive);
    opt_str(s, "--input", "input", "location root (falls back to UCAST_DATA_ROOT)");
    opt_str(s, "--out", "out", "derived-patch root");
    opt_int(s, "--seed", "seed", "split seed");
    opt_list(s, "--ranges", "ranges", "comma-separated ranges in months, e.g. 1,3,6");
    opt_int(s, "--horizon", "fcm_horizon", "first-change lookahead in months");
    opt_flag(s, "--deterministic", "deterministic", "pin to one thread for bit-stable replay");
  }
  {
    auto& s = add_command(app, specs, "train-detect",
                          "train the two-image change detector on every range at once",
                          train_detect_defaults(), cmd_train_detect);
    common_train_opts(s);
    opt_list(s, "--ranges", "ranges", "buckets to mix; default is every derived bucket");
    opt_int(s, "--steps", "steps", "0 picks the encoder default");
    opt_real(s, "--lr", "lr", "learning rate");
  }
  {
    auto& s = add_command(app, specs, "train-forecast",
                          "train a single-image forecaster for one range",
                          train_forecast_defaults(false),
                          [](const json& cfg) { return cmd_train_single(cfg, false); });
    common_train_opts(s);
    opt_int(s, "--range", "range", "forecast range in months");
    opt_int(s, "--freeze-steps", "freeze_steps", "-1 picks the encoder default");
    opt_int(s, "--finetune-steps", "finetune_steps", "-1 picks the encoder default");
    opt_str(s, "--init", "init", "checkpoint whose backbone seeds this run");
  }
  {
    auto& s = add_command(app, specs, "train-timerange",
                          "train the three-logit early/late forecaster",
                          train_forecast_defaults(true),
                          [](const json& cfg) { return cmd_train_single(cfg, true); });
    common_train_opts(s);
    opt_int(s, "--range", "range", "pair range of the training bucket in months");
    opt_int(s, "--freeze-steps", "freeze_steps", "-1 picks the encoder default");
    opt_int(s, "--finetune-steps", "finetune_steps", "-1 picks the encoder default");
    opt_str(s, "--init", "init", "checkpoint whose backbone seeds this run");
    opt_real(s, "--lambda", "lambda_mix", "weight of the binary change term");
    opt_int(s, "--boundary", "early_boundary", "last month counted as early");
    opt_int(s, "--horizon", "horizon", "last month counted as change");
  }
  {
    auto& s = add_command(app, specs, "eval", "evaluate a checkpoint on a derived split",
                          eval_defaults(), cmd_eval);
    opt_str(s, "--checkpoint", "checkpoint", "trained checkpoint (.pt with JSON sidecar)");
    opt_str(s, "--data", "data", "derived-patch root (falls back to UCAST_DATA_ROOT)");
    opt_str(s, "--out", "out", "report directory");
    opt_str(s, "--split", "split", "train, val, or test");
    opt_list(s, "--ranges", "ranges", "buckets to evaluate (detectors only)");
    opt_int(s, "--batch-size", "batch_size", "evaluation batch size");
    opt_flag(s, "--oracle-threshold", "oracle_threshold",
             "also sweep for the F1-best threshold and report it");
    opt_int(s, "--pr-points", "pr_points", "precision/recall curve resolution (0 = off)");
    opt_str(s, "--label", "label", "series label used in the report and charts");
    opt_flag(s, "--deterministic", "deterministic", "pin to one thread for bit-stable replay");
  }
  {
    auto& s = add_command(app, specs, "plot", "merge curve CSVs into one chart",
                          plot_defaults(), cmd_plot);
    s.cmd->add_option_function<std::string>(
        "--input",
        [&s](const std::string& v) {
          auto& spec = s;
          json inputs = json::array();
          for (auto& [key, val] : spec.overrides)
            if (key == std::string("inputs")) inputs = val;
          inputs.push_back(v);
          std::erase_if(spec.overrides,
                        [](const auto& kv) { return kv.first == std::string("inputs"); });
          spec.overrides.emplace_back("inputs", inputs);
        },
        "curve CSV to merge; repeatable");
    opt_str(s, "--out", "out", "output directory for curves.csv and chart.svg");
    opt_str(s, "--title", "title", "chart title");
    opt_str(s, "--x-label", "x_label", "x axis label");
    opt_str(s, "--y-label", "y_label", "y axis label");
    opt_real(s, "--y-min", "y_min", "fixed lower y bound");
    opt_real(s, "--y-max", "y_max", "fixed upper y bound");
    opt_flag(s, "--deterministic", "deterministic", "pin to one thread for bit-stable replay");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto& spec : specs) {
    if (!spec.cmd->parsed()) continue;
    try {
      return spec.run(resolve_config(spec));
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  }
  return 2;
}

}  // namespace ucast
