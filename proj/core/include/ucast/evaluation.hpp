#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "ucast/network.hpp"
#include "ucast/patch_store.hpp"

namespace ucast {

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
};

/// Foreground-class metrics. Conventions: tp = fp = fn = 0 scores 1.0 across
/// the board (nothing to find, nothing found); otherwise any 0/0 ratio is 0.
struct BinaryMetrics {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  ConfusionCounts counts;
};

BinaryMetrics binary_metrics(const torch::Tensor& pred, const torch::Tensor& label);
BinaryMetrics metrics_from_counts(const ConfusionCounts& counts);

/// Counts at a threshold; positive prediction = prob strictly above it.
ConfusionCounts count_predictions(const torch::Tensor& probs, const torch::Tensor& labels,
                                  double threshold);

/// Precision-recall curve sampled at up to n_thresholds score quantiles.
/// Prediction here is inclusive (score >= threshold), so the lowest-score
/// point predicts everything positive and reaches recall 1. Points are
/// ordered by ascending threshold; recall is non-increasing along them.
/// Rejects label sets with no positives.
struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
};
std::vector<PrPoint> pr_curve(const std::vector<float>& scores,
                              const std::vector<uint8_t>& labels, int n_thresholds = 256);

/// Early/late evaluation on the pixels that truly change within the horizon:
/// ground truth early = first change month in [1, early_boundary], predicted
/// early = p_e > 0.5. Change-forecast metrics from p_c at the given threshold
/// are reported alongside (over all pixels). evaluated == 0 means the
/// timing part is not applicable, not zero.
struct TimeRangeReport {
  std::array<std::array<int64_t, 2>, 2> confusion{};  // rows GT {early,late}, cols predicted
  int64_t evaluated = 0;
  BinaryMetrics change;
  double change_threshold = 1.0 / 3.0;

  bool applicable() const { return evaluated > 0; }
  double accuracy() const;
  double early_precision() const;
  double late_precision() const;
  double early_f1() const;
  double late_f1() const;
  double af1() const;  // mean of the two class F1s
};

TimeRangeReport timerange_eval(const torch::Tensor& p_e, const torch::Tensor& p_c,
                               const torch::Tensor& first_change_month, double change_threshold,
                               int early_boundary = 12, int horizon = 24);

/// Whole-archive runs (eval mode, batched) for the CLI and acceptance checks.
struct EvalResult {
  BinaryMetrics metrics;
  double threshold = 0.5;
  int64_t n_samples = 0;
};

EvalResult evaluate_detector(ChangeDetector net, const PatchArchive& archive, double threshold,
                             int64_t batch_size = 8);
EvalResult evaluate_forecaster(ForecastNet net, const PatchArchive& archive, double threshold,
                               int64_t batch_size = 8);
TimeRangeReport evaluate_timerange(ForecastNet net, const PatchArchive& archive,
                                   double change_threshold, int early_boundary = 12,
                                   int horizon = 24, int64_t batch_size = 8);

/// Per-sample probability maps concatenated over the archive, with matching
/// labels, for threshold-oracle sweeps.
struct ScoreSet {
  std::vector<float> scores;
  std::vector<uint8_t> labels;
};
ScoreSet collect_forecast_scores(ForecastNet net, const PatchArchive& archive,
                                 int64_t batch_size = 8);
ScoreSet collect_detect_scores(ChangeDetector net, const PatchArchive& archive,
                               int64_t batch_size = 8);
/// p_c of a three-logit network against month-in-[1,horizon] labels.
ScoreSet collect_timerange_scores(ForecastNet net, const PatchArchive& archive, int horizon = 24,
                                  int64_t batch_size = 8);

/// Named (x, y) series in insertion order; the exchange format for every
/// plot (CSV is the source of truth, SVG a rendering of it).
struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};
using CurveSeries = std::vector<CurvePoint>;

struct CurveSet {
  std::vector<std::pair<std::string, CurveSeries>> series;

  const CurveSeries* find(const std::string& name) const;
  CurveSeries& at(const std::string& name);  // appends an empty series if missing
};

/// CSV with a "series,x,y" header; rows keep file order.
CurveSet load_curves_csv(const std::filesystem::path& path);
void save_curves_csv(const std::filesystem::path& path, const CurveSet& curves);

/// Metrics of one forecasting range, for the range-sweep plots.
struct RangeReport {
  int delta_months = 0;
  BinaryMetrics metrics;
  double threshold_used = 0.5;
};

/// Everything one evaluation run produced. `label` names the series when
/// several reports share a plot.
struct EvalReport {
  std::string label;
  std::vector<RangeReport> ranges;
  std::vector<PrPoint> pr;
  TimeRangeReport timerange;
  bool has_timerange = false;
};

/// Writes eval_report.json plus, when the inputs carry the data, the range
/// F1 / precision / recall charts, the PR curve, and the confusion heatmap.
/// Every chart is paired with a CSV of its exact data (F1 and precision /
/// recall series are in percent, PR curves in fractions). Requires at least
/// one report.
void emit_plots(const std::vector<EvalReport>& reports, const std::filesystem::path& out_dir);

}  // namespace ucast
