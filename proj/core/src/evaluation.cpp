#include "ucast/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "ucast/common.hpp"
#include "ucast/svg_plot.hpp"

namespace ucast {

namespace {

using nlohmann::json;

// Shortest round-trip decimal form, so CSV values reload bit-exact.
std::string fmt_number(double v) { return json(v).dump(); }

ConfusionCounts count_bool(const torch::Tensor& pred, const torch::Tensor& truth) {
  ConfusionCounts c;
  c.tp = (pred & truth).sum().item<int64_t>();
  c.fp = (pred & truth.logical_not()).sum().item<int64_t>();
  c.fn = (pred.logical_not() & truth).sum().item<int64_t>();
  c.tn = pred.numel() - c.tp - c.fp - c.fn;
  return c;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  return *this;
}

BinaryMetrics metrics_from_counts(const ConfusionCounts& counts) {
  require(counts.tp >= 0 && counts.fp >= 0 && counts.fn >= 0 && counts.tn >= 0,
          "metrics_from_counts: negative count");
  BinaryMetrics m;
  m.counts = counts;
  if (counts.tp == 0 && counts.fp == 0 && counts.fn == 0) {
    m.f1 = m.precision = m.recall = 1.0;
    return m;
  }
  const double tp = static_cast<double>(counts.tp);
  m.precision = counts.tp + counts.fp > 0 ? tp / static_cast<double>(counts.tp + counts.fp) : 0.0;
  m.recall = counts.tp + counts.fn > 0 ? tp / static_cast<double>(counts.tp + counts.fn) : 0.0;
  const int64_t f1_den = 2 * counts.tp + counts.fp + counts.fn;
  m.f1 = f1_den > 0 ? 2.0 * tp / static_cast<double>(f1_den) : 0.0;
  return m;
}

BinaryMetrics binary_metrics(const torch::Tensor& pred, const torch::Tensor& label) {
  require(pred.defined() && label.defined(), "binary_metrics: undefined input");
  require(pred.sizes() == label.sizes(), "binary_metrics: shape mismatch");
  return metrics_from_counts(count_bool(pred.to(torch::kBool), label.to(torch::kBool)));
}

ConfusionCounts count_predictions(const torch::Tensor& probs, const torch::Tensor& labels,
                                  double threshold) {
  require(probs.defined() && labels.defined(), "count_predictions: undefined input");
  require(probs.sizes() == labels.sizes(), "count_predictions: shape mismatch");
  return count_bool(probs.gt(threshold), labels.to(torch::kBool));
}

std::vector<PrPoint> pr_curve(const std::vector<float>& scores,
                              const std::vector<uint8_t>& labels, int n_thresholds) {
  require(scores.size() == labels.size(), "pr_curve: scores and labels differ in length");
  require(!scores.empty(), "pr_curve: empty input");
  require(n_thresholds >= 2, "pr_curve: need at least two thresholds");

  const auto n = scores.size();
  std::vector<std::pair<float, uint8_t>> rows(n);
  int64_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = {scores[i], labels[i]};
    if (labels[i] != 0) ++n_pos;
  }
  require(n_pos > 0, "pr_curve: labels contain no positive");
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // pos_from[i] = positives among rows[i..]; rows are score-ascending.
  std::vector<int64_t> pos_from(n + 1, 0);
  for (std::size_t i = n; i-- > 0;)
    pos_from[i] = pos_from[i + 1] + (rows[i].second != 0 ? 1 : 0);

  std::vector<float> cand;
  for (int k = 0; k < n_thresholds; ++k) {
    const auto idx = static_cast<std::size_t>(k) * (n - 1) / static_cast<std::size_t>(n_thresholds - 1);
    const float v = rows[idx].first;
    if (cand.empty() || v > cand.back()) cand.push_back(v);
  }

  std::vector<PrPoint> out;
  out.reserve(cand.size());
  for (float t : cand) {
    const auto first = static_cast<std::size_t>(
        std::lower_bound(rows.begin(), rows.end(), t,
                         [](const auto& row, float v) { return row.first < v; }) -
        rows.begin());
    const auto predicted = static_cast<int64_t>(n - first);
    const auto tp = pos_from[first];
    PrPoint p;
    p.threshold = t;
    p.recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    p.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    out.push_back(p);
  }
  return out;
}

double TimeRangeReport::accuracy() const {
  if (evaluated <= 0) return 0.0;
  return static_cast<double>(confusion[0][0] + confusion[1][1]) / static_cast<double>(evaluated);
}

double TimeRangeReport::early_precision() const {
  const int64_t den = confusion[0][0] + confusion[1][0];
  return den > 0 ? static_cast<double>(confusion[0][0]) / static_cast<double>(den) : 0.0;
}

double TimeRangeReport::late_precision() const {
  const int64_t den = confusion[0][1] + confusion[1][1];
  return den > 0 ? static_cast<double>(confusion[1][1]) / static_cast<double>(den) : 0.0;
}

double TimeRangeReport::early_f1() const {
  ConfusionCounts c{confusion[0][0], confusion[1][0], confusion[0][1], confusion[1][1]};
  return metrics_from_counts(c).f1;
}

double TimeRangeReport::late_f1() const {
  ConfusionCounts c{confusion[1][1], confusion[0][1], confusion[1][0], confusion[0][0]};
  return metrics_from_counts(c).f1;
}

double TimeRangeReport::af1() const { return 0.5 * (early_f1() + late_f1()); }

TimeRangeReport timerange_eval(const torch::Tensor& p_e, const torch::Tensor& p_c,
                               const torch::Tensor& first_change_month, double change_threshold,
                               int early_boundary, int horizon) {
  require(p_e.defined() && p_c.defined() && first_change_month.defined(),
          "timerange_eval: undefined input");
  require(p_e.sizes() == p_c.sizes() && p_e.sizes() == first_change_month.sizes(),
          "timerange_eval: shape mismatch");
  require(change_threshold >= 0.0 && change_threshold <= 1.0,
          "timerange_eval: change_threshold must lie in [0, 1]");
  require(early_boundary >= 1 && early_boundary <= horizon,
          "timerange_eval: need 1 <= early_boundary <= horizon");

  auto months = first_change_month.to(torch::kInt32);
  auto truly_change = months.ge(1) & months.le(horizon);

  TimeRangeReport rep;
  rep.change_threshold = change_threshold;
  rep.change = metrics_from_counts(count_bool(p_c.gt(change_threshold), truly_change));

  auto gt_early = months.ge(1) & months.le(early_boundary);
  auto gt_late = truly_change & gt_early.logical_not();
  auto pred_early = p_e.gt(0.5);
  rep.evaluated = truly_change.sum().item<int64_t>();
  rep.confusion[0][0] = (gt_early & pred_early).sum().item<int64_t>();
  rep.confusion[0][1] = (gt_early & pred_early.logical_not()).sum().item<int64_t>();
  rep.confusion[1][0] = (gt_late & pred_early).sum().item<int64_t>();
  rep.confusion[1][1] = (gt_late & pred_early.logical_not()).sum().item<int64_t>();
  return rep;
}

namespace {

torch::Tensor batch_images(const torch::Tensor& stacked, int64_t lo, int64_t hi) {
  return stacked.slice(0, lo, hi).to(torch::kFloat32).div(255.0);
}

}  // namespace

EvalResult evaluate_detector(ChangeDetector net, const PatchArchive& archive, double threshold,
                             int64_t batch_size) {
  require(archive.n() > 0, "evaluate_detector: empty archive");
  require(batch_size >= 1, "evaluate_detector: batch_size must be >= 1");
  torch::NoGradGuard guard;
  net->eval();
  ConfusionCounts total;
  for (int64_t i = 0; i < archive.n(); i += batch_size) {
    const int64_t j = std::min(archive.n(), i + batch_size);
    auto probs = torch::sigmoid(net->forward(batch_images(archive.images_t0, i, j),
                                             batch_images(archive.images_t1, i, j))
                                    .squeeze(1));
    total += count_predictions(probs, archive.change_masks.slice(0, i, j), threshold);
  }
  EvalResult r;
  r.metrics = metrics_from_counts(total);
  r.threshold = threshold;
  r.n_samples = archive.n();
  return r;
}

EvalResult evaluate_forecaster(ForecastNet net, const PatchArchive& archive, double threshold,
                               int64_t batch_size) {
  require(archive.n() > 0, "evaluate_forecaster: empty archive");
  require(batch_size >= 1, "evaluate_forecaster: batch_size must be >= 1");
  require(net->out_logits() == 1, "evaluate_forecaster: needs a one-logit network");
  torch::NoGradGuard guard;
  net->eval();
  ConfusionCounts total;
  for (int64_t i = 0; i < archive.n(); i += batch_size) {
    const int64_t j = std::min(archive.n(), i + batch_size);
    auto probs =
        torch::sigmoid(net->forward(batch_images(archive.images_t0, i, j)).squeeze(1));
    total += count_predictions(probs, archive.change_masks.slice(0, i, j), threshold);
  }
  EvalResult r;
  r.metrics = metrics_from_counts(total);
  r.threshold = threshold;
  r.n_samples = archive.n();
  return r;
}

TimeRangeReport evaluate_timerange(ForecastNet net, const PatchArchive& archive,
                                   double change_threshold, int early_boundary, int horizon,
                                   int64_t batch_size) {
  require(archive.n() > 0, "evaluate_timerange: empty archive");
  require(archive.first_change_maps.defined(),
          "evaluate_timerange: archive has no first-change month maps");
  require(batch_size >= 1, "evaluate_timerange: batch_size must be >= 1");
  require(net->out_logits() == 3, "evaluate_timerange: needs a three-logit network");
  torch::NoGradGuard guard;
  net->eval();
  TimeRangeReport total;
  total.change_threshold = change_threshold;
  ConfusionCounts change_counts;
  for (int64_t i = 0; i < archive.n(); i += batch_size) {
    const int64_t j = std::min(archive.n(), i + batch_size);
    auto logits = net->forward(batch_images(archive.images_t0, i, j));
    auto probs = timerange_probs(logits.select(1, 0), logits.select(1, 1), logits.select(1, 2));
    auto rep = timerange_eval(probs.p_e, probs.p_c, archive.first_change_maps.slice(0, i, j),
                              change_threshold, early_boundary, horizon);
    total.evaluated += rep.evaluated;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) total.confusion[r][c] += rep.confusion[r][c];
    change_counts += rep.change.counts;
  }
  total.change = metrics_from_counts(change_counts);
  return total;
}

namespace {

ScoreSet collect_scores(const torch::Tensor& probs, const torch::Tensor& labels, ScoreSet&& acc) {
  auto p = probs.reshape(-1).to(torch::kFloat32).contiguous();
  auto y = labels.reshape(-1).to(torch::kUInt8).contiguous();
  acc.scores.insert(acc.scores.end(), p.data_ptr<float>(), p.data_ptr<float>() + p.numel());
  acc.labels.insert(acc.labels.end(), y.data_ptr<uint8_t>(),
                    y.data_ptr<uint8_t>() + y.numel());
  return std::move(acc);
}

}  // namespace

ScoreSet collect_forecast_scores(ForecastNet net, const PatchArchive& archive,
                                 int64_t batch_size) {
  require(archive.n() > 0, "collect_forecast_scores: empty archive");
  require(batch_size >= 1, "collect_forecast_scores: batch_size must be >= 1");
  require(net->out_logits() == 1, "collect_forecast_scores: needs a one-logit network");
  torch::NoGradGuard guard;
  net->eval();
  ScoreSet set;
  const auto total = static_cast<std::size_t>(archive.n()) *
                     static_cast<std::size_t>(archive.change_masks.size(1)) *
                     static_cast<std::size_t>(archive.change_masks.size(2));
  set.scores.reserve(total);
  set.labels.reserve(total);
  for (int64_t i = 0; i < archive.n(); i += batch_size) {
    const int64_t j = std::min(archive.n(), i + batch_size);
    auto probs =
        torch::sigmoid(net->forward(batch_images(archive.images_t0, i, j)).squeeze(1));
    set = collect_scores(probs, archive.change_masks.slice(0, i, j), std::move(set));
  }
  return set;
}

ScoreSet collect_detect_scores(ChangeDetector net, const PatchArchive& archive,
                               int64_t batch_size) {
  require(archive.n() > 0, "collect_detect_scores: empty archive");
  require(batch_size >= 1, "collect_detect_scores: batch_size must be >= 1");
  torch::NoGradGuard guard;
  net->eval();
  ScoreSet set;
  const auto total = static_cast<std::size_t>(archive.n()) *
                     static_cast<std::size_t>(archive.change_masks.size(1)) *
                     static_cast<std::size_t>(archive.change_masks.size(2));
  set.scores.reserve(total);
  set.labels.reserve(total);
  for (int64_t i = 0; i < archive.n(); i += batch_size) {
    const int64_t j = std::min(archive.n(), i + batch_size);
    auto probs = torch::sigmoid(net->forward(batch_images(archive.images_t0, i, j),
                                             batch_images(archive.images_t1, i, j))
                                    .squeeze(1));
    set = collect_scores(probs, archive.change_masks.slice(0, i, j), std::move(set));
  }
  return set;
}

ScoreSet collect_timerange_scores(ForecastNet net, const PatchArchive& archive, int horizon,
                                  int64_t batch_size) {
  require(archive.n() > 0, "collect_timerange_scores: empty archive");
  require(batch_size >= 1, "collect_timerange_scores: batch_size must be >= 1");
  require(net->out_logits() == 3, "collect_timerange_scores: needs a three-logit network");
  require(archive.first_change_maps.defined(),
          "collect_timerange_scores: archive lacks first-change maps");
  require(horizon >= 1, "collect_timerange_scores: horizon must be >= 1");
  torch::NoGradGuard guard;
  net->eval();
  ScoreSet set;
  const auto total = static_cast<std::size_t>(archive.n()) *
                     static_cast<std::size_t>(archive.change_masks.size(1)) *
                     static_cast<std::size_t>(archive.change_masks.size(2));
  set.scores.reserve(total);
  set.labels.reserve(total);
  for (int64_t i = 0; i < archive.n(); i += batch_size) {
    const int64_t j = std::min(archive.n(), i + batch_size);
    auto logits = net->forward(batch_images(archive.images_t0, i, j));
    auto probs = timerange_probs(logits.select(1, 0), logits.select(1, 1), logits.select(1, 2));
    auto months = archive.first_change_maps.slice(0, i, j).to(torch::kInt32);
    auto labels = months.ge(1).logical_and(months.le(horizon));
    set = collect_scores(probs.p_c, labels, std::move(set));
  }
  return set;
}

const CurveSeries* CurveSet::find(const std::string& name) const {
  for (const auto& [n, s] : series)
    if (n == name) return &s;
  return nullptr;
}

CurveSeries& CurveSet::at(const std::string& name) {
  for (auto& [n, s] : series)
    if (n == name) return s;
  series.emplace_back(name, CurveSeries{});
  return series.back().second;
}

CurveSet load_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "load_curves_csv: cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "load_curves_csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "series,x,y",
          "load_curves_csv: expected a 'series,x,y' header in " + path.string());

  CurveSet set;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    require(c1 != std::string::npos && c2 != std::string::npos &&
                line.find(',', c2 + 1) == std::string::npos,
            "load_curves_csv: expected three columns at " + where);
    const auto name = line.substr(0, c1);
    require(!name.empty(), "load_curves_csv: empty series name at " + where);
    CurvePoint p;
    try {
      std::size_t used = 0;
      const auto xs = line.substr(c1 + 1, c2 - c1 - 1);
      p.x = std::stod(xs, &used);
      require(used == xs.size(), "trailing characters");
      const auto ys = line.substr(c2 + 1);
      p.y = std::stod(ys, &used);
      require(used == ys.size(), "trailing characters");
    } catch (const std::exception&) {
      throw std::invalid_argument("load_curves_csv: malformed number at " + where);
    }
    set.at(name).push_back(p);
  }
  return set;
}

void save_curves_csv(const std::filesystem::path& path, const CurveSet& curves) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "save_curves_csv: cannot write " + path.string());
  out << "series,x,y\n";
  for (const auto& [name, series] : curves.series) {
    require(name.find(',') == std::string::npos && name.find('\n') == std::string::npos,
            "save_curves_csv: series name must not contain ',' or newline: " + name);
    for (const auto& p : series)
      out << name << "," << fmt_number(p.x) << "," << fmt_number(p.y) << "\n";
  }
}

namespace {

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

json report_json(const EvalReport& rep) {
  json j;
  j["label"] = rep.label;
  j["ranges"] = json::array();
  for (const auto& r : rep.ranges) {
    j["ranges"].push_back({{"delta_months", r.delta_months},
                           {"f1", r.metrics.f1},
                           {"precision", r.metrics.precision},
                           {"recall", r.metrics.recall},
                           {"threshold_used", r.threshold_used},
                           {"counts",
                            {{"tp", r.metrics.counts.tp},
                             {"fp", r.metrics.counts.fp},
                             {"fn", r.metrics.counts.fn},
                             {"tn", r.metrics.counts.tn}}}});
  }
  j["pr_curve"] = json::array();
  for (const auto& p : rep.pr)
    j["pr_curve"].push_back({{"recall", p.recall}, {"precision", p.precision},
                             {"threshold", p.threshold}});
  if (rep.has_timerange) {
    const auto& t = rep.timerange;
    j["timerange"] = {{"confusion",
                       {{t.confusion[0][0], t.confusion[0][1]},
                        {t.confusion[1][0], t.confusion[1][1]}}},
                      {"evaluated", t.evaluated},
                      {"applicable", t.applicable()},
                      {"accuracy", t.accuracy()},
                      {"early_precision", t.early_precision()},
                      {"late_precision", t.late_precision()},
                      {"early_f1", t.early_f1()},
                      {"late_f1", t.late_f1()},
                      {"af1", t.af1()},
                      {"change",
                       {{"f1", t.change.f1},
                        {"precision", t.change.precision},
                        {"recall", t.change.recall},
                        {"threshold", t.change_threshold},
                        {"counts",
                         {{"tp", t.change.counts.tp},
                          {"fp", t.change.counts.fp},
                          {"fn", t.change.counts.fn},
                          {"tn", t.change.counts.tn}}}}}};
  }
  return j;
}

}  // namespace

void emit_plots(const std::vector<EvalReport>& reports, const std::filesystem::path& out_dir) {
  require(!reports.empty(), "emit_plots: need at least one report");
  std::filesystem::create_directories(out_dir);

  auto label_of = [&](std::size_t i) {
    return reports[i].label.empty() ? "run" + std::to_string(i + 1) : reports[i].label;
  };

  {
    json j = json::array();
    for (const auto& r : reports) j.push_back(report_json(r));
    std::ofstream out(out_dir / "eval_report.json", std::ios::trunc);
    require(out.good(), "emit_plots: cannot write in " + out_dir.string());
    out << j.dump(2) << "\n";
  }

  bool any_ranges = false, any_pr = false;
  for (const auto& r : reports) {
    any_ranges = any_ranges || !r.ranges.empty();
    any_pr = any_pr || !r.pr.empty();
  }

  if (any_ranges) {
    CurveSet f1, prre;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (reports[i].ranges.empty()) continue;
      auto& fs = f1.at(label_of(i));
      auto& ps = prre.at(label_of(i) + " precision");
      auto& rs = prre.at(label_of(i) + " recall");
      for (const auto& r : reports[i].ranges) {
        fs.push_back({static_cast<double>(r.delta_months), 100.0 * r.metrics.f1});
        ps.push_back({static_cast<double>(r.delta_months), 100.0 * r.metrics.precision});
        rs.push_back({static_cast<double>(r.delta_months), 100.0 * r.metrics.recall});
      }
    }
    save_curves_csv(out_dir / "f1_by_range.csv", f1);
    PlotOptions fo;
    fo.title = "Foreground F1 by forecasting range";
    fo.x_label = "range [months]";
    fo.y_label = "F1 [%]";
    fo.y_min = 0.0;
    write_line_chart_svg(out_dir / "f1_by_range.svg", f1, fo);

    save_curves_csv(out_dir / "precision_recall_by_range.csv", prre);
    PlotOptions po;
    po.title = "Foreground precision and recall by forecasting range";
    po.x_label = "range [months]";
    po.y_label = "score [%]";
    po.y_min = 0.0;
    write_line_chart_svg(out_dir / "precision_recall_by_range.svg", prre, po);
  }

  if (any_pr) {
    CurveSet pr;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (reports[i].pr.empty()) continue;
      auto& s = pr.at(label_of(i));
      for (const auto& p : reports[i].pr) s.push_back({p.recall, p.precision});
    }
    save_curves_csv(out_dir / "pr_curve.csv", pr);
    PlotOptions po;
    po.title = "Precision-recall curve";
    po.x_label = "recall";
    po.y_label = "precision";
    po.y_min = 0.0;
    po.y_max = 1.0;
    write_line_chart_svg(out_dir / "pr_curve.svg", pr, po);
  }

  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (!reports[i].has_timerange) continue;
    const auto& t = reports[i].timerange;
    const auto stem = reports.size() == 1 ? std::string("timerange_confusion")
                                          : "timerange_confusion_" + slug(label_of(i));
    {
      std::ofstream out(out_dir / (stem + ".csv"), std::ios::trunc);
      require(out.good(), "emit_plots: cannot write in " + out_dir.string());
      out << "gt,predicted,count\n";
      const char* names[2] = {"early", "late"};
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          out << names[r] << "," << names[c] << "," << t.confusion[r][c] << "\n";
    }
    write_confusion_svg(out_dir / (stem + ".svg"), t.confusion, {"early", "late"},
                        "Time-range confusion (" + label_of(i) + ")");
  }
}

}  // namespace ucast
