#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <string>

#include "ucast/evaluation.hpp"

namespace ucast {

/// Self-contained SVG charts (axes, ticks, legend). Output is deterministic:
/// same inputs, same bytes.
struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 760;
  int height = 480;
  // NaN = derive the range from the data with a small margin.
  double y_min = std::numeric_limits<double>::quiet_NaN();
  double y_max = std::numeric_limits<double>::quiet_NaN();
};

void write_line_chart_svg(const std::filesystem::path& path, const CurveSet& curves,
                          const PlotOptions& options);

/// 2x2 confusion heatmap; rows are ground truth, columns predictions.
void write_confusion_svg(const std::filesystem::path& path,
                         const std::array<std::array<int64_t, 2>, 2>& confusion,
                         const std::array<std::string, 2>& class_names,
                         const std::string& title);

}  // namespace ucast
