#include "ucast/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "ucast/common.hpp"

namespace ucast {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string px(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Tick spacing of the form {1,2,5} * 10^k giving roughly `target` steps.
double nice_step(double span, int target) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag * (1.0 + 1e-12)) return m * mag;
  }
  return 10.0 * mag;
}

std::vector<double> ticks_for(double lo, double hi, int target) {
  const double step = nice_step(hi - lo, target);
  std::vector<double> out;
  double t = std::ceil(lo / step - 1e-9) * step;
  for (; t <= hi + 1e-9 * step; t += step) {
    // snap near-zero to an exact 0 so the label never reads "-0"
    out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  }
  return out;
}

}  // namespace

void write_line_chart_svg(const std::filesystem::path& path, const CurveSet& curves,
                          const PlotOptions& options) {
  require(options.width >= 200 && options.height >= 150, "write_line_chart_svg: canvas too small");
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());

  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  bool have_data = false;
  for (const auto& [name, series] : curves.series) {
    for (const auto& p : series) {
      if (!have_data) {
        x_lo = x_hi = p.x;
        y_lo = y_hi = p.y;
        have_data = true;
      } else {
        x_lo = std::min(x_lo, p.x);
        x_hi = std::max(x_hi, p.x);
        y_lo = std::min(y_lo, p.y);
        y_hi = std::max(y_hi, p.y);
      }
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (!std::isnan(options.y_min)) y_lo = options.y_min;
  if (!std::isnan(options.y_max)) y_hi = options.y_max;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  if (std::isnan(options.y_max)) y_hi += 0.05 * (y_hi - y_lo);

  const double ml = 64, mr = 18, mt = options.title.empty() ? 18 : 40, mb = 48;
  const double pw = options.width - ml - mr;
  const double ph = options.height - mt - mb;
  auto sx = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) { return mt + ph - (y - y_lo) / (y_hi - y_lo) * ph; };

  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "write_line_chart_svg: cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\""
      << options.height << "\" viewBox=\"0 0 " << options.width << " " << options.height
      << "\">\n";
  out << "<rect width=\"" << options.width << "\" height=\"" << options.height
      << "\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    out << "<text x=\"" << px(options.width / 2.0)
        << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\" "
           "font-weight=\"bold\">"
        << escape_xml(options.title) << "</text>\n";
  }

  // gridlines and tick labels
  out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (double t : ticks_for(x_lo, x_hi, 6)) {
    const auto X = px(sx(t));
    out << "<line x1=\"" << X << "\" y1=\"" << px(mt) << "\" x2=\"" << X << "\" y2=\""
        << px(mt + ph) << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << X << "\" y=\"" << px(mt + ph + 16) << "\" text-anchor=\"middle\">"
        << num(t) << "</text>\n";
  }
  for (double t : ticks_for(y_lo, y_hi, 6)) {
    const auto Y = px(sy(t));
    out << "<line x1=\"" << px(ml) << "\" y1=\"" << Y << "\" x2=\"" << px(ml + pw) << "\" y2=\""
        << Y << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << px(ml - 6) << "\" y=\"" << px(sy(t) + 4)
        << "\" text-anchor=\"end\">" << num(t) << "</text>\n";
  }
  out << "</g>\n";

  // axes
  out << "<line x1=\"" << px(ml) << "\" y1=\"" << px(mt + ph) << "\" x2=\"" << px(ml + pw)
      << "\" y2=\"" << px(mt + ph) << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  out << "<line x1=\"" << px(ml) << "\" y1=\"" << px(mt) << "\" x2=\"" << px(ml) << "\" y2=\""
      << px(mt + ph) << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  if (!options.x_label.empty()) {
    out << "<text x=\"" << px(ml + pw / 2) << "\" y=\"" << px(options.height - 10.0)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << escape_xml(options.x_label) << "</text>\n";
  }
  if (!options.y_label.empty()) {
    out << "<text x=\"16\" y=\"" << px(mt + ph / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 16 "
        << px(mt + ph / 2) << ")\">" << escape_xml(options.y_label) << "</text>\n";
  }

  // series
  int color = 0;
  for (const auto& [name, series] : curves.series) {
    const char* stroke = kPalette[color % kPaletteSize];
    if (!series.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << stroke
          << "\" stroke-width=\"2\" points=\"";
      for (const auto& p : series) out << px(sx(p.x)) << "," << px(sy(p.y)) << " ";
      out << "\"/>\n";
      for (const auto& p : series) {
        out << "<circle cx=\"" << px(sx(p.x)) << "\" cy=\"" << px(sy(p.y))
            << "\" r=\"2.5\" fill=\"" << stroke << "\"/>\n";
      }
    }
    ++color;
  }

  // legend, top-right inside the plot area
  if (!curves.series.empty()) {
    const double lx = ml + pw - 190, ly = mt + 10;
    out << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    int row = 0;
    for (const auto& [name, series] : curves.series) {
      const double y = ly + 16.0 * row;
      out << "<line x1=\"" << px(lx) << "\" y1=\"" << px(y - 4) << "\" x2=\"" << px(lx + 22)
          << "\" y2=\"" << px(y - 4) << "\" stroke=\"" << kPalette[row % kPaletteSize]
          << "\" stroke-width=\"2\"/>\n";
      out << "<text x=\"" << px(lx + 28) << "\" y=\"" << px(y) << "\">" << escape_xml(name)
          << "</text>\n";
      ++row;
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

void write_confusion_svg(const std::filesystem::path& path,
                         const std::array<std::array<int64_t, 2>, 2>& confusion,
                         const std::array<std::string, 2>& class_names,
                         const std::string& title) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const int width = 420, height = 420;
  const double ml = 110, mt = 96, cell = 130;

  int64_t max_count = 1;
  for (const auto& row : confusion)
    for (auto v : row) max_count = std::max(max_count, v);

  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "write_confusion_svg: cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << px(width / 2.0)
      << "\" y=\"26\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\" "
         "font-weight=\"bold\">"
      << escape_xml(title) << "</text>\n";
  out << "<text x=\"" << px(ml + cell)
      << "\" y=\"54\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
         "predicted</text>\n";
  out << "<text x=\"22\" y=\"" << px(mt + cell)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 22 "
      << px(mt + cell) << ")\">ground truth</text>\n";

  out << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (int c = 0; c < 2; ++c) {
    out << "<text x=\"" << px(ml + cell * c + cell / 2) << "\" y=\"" << px(mt - 10)
        << "\" text-anchor=\"middle\">" << escape_xml(class_names[static_cast<std::size_t>(c)])
        << "</text>\n";
  }
  for (int r = 0; r < 2; ++r) {
    out << "<text x=\"" << px(ml - 10) << "\" y=\"" << px(mt + cell * r + cell / 2 + 4)
        << "\" text-anchor=\"end\">" << escape_xml(class_names[static_cast<std::size_t>(r)])
        << "</text>\n";
  }
  out << "</g>\n";

  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      const auto v = confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      const double frac = static_cast<double>(v) / static_cast<double>(max_count);
      // white at zero toward a steel blue at the cell maximum
      const int red = static_cast<int>(std::lround(255 - frac * (255 - 70)));
      const int green = static_cast<int>(std::lround(255 - frac * (255 - 130)));
      const int blue = static_cast<int>(std::lround(255 - frac * (255 - 180)));
      char fill[16];
      std::snprintf(fill, sizeof(fill), "#%02x%02x%02x", red, green, blue);
      const double x = ml + cell * c, y = mt + cell * r;
      out << "<rect x=\"" << px(x) << "\" y=\"" << px(y) << "\" width=\"" << px(cell)
          << "\" height=\"" << px(cell) << "\" fill=\"" << fill
          << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
      const char* text_fill = frac > 0.55 ? "white" : "#111";
      out << "<text x=\"" << px(x + cell / 2) << "\" y=\"" << px(y + cell / 2 + 5)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\" fill=\""
          << text_fill << "\">" << v << "</text>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace ucast
