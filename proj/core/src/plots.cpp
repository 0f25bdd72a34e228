#include "algotag/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "algotag/error.hpp"

namespace algotag::plots {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range span_of(const std::vector<Series>& series, bool right) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (const auto& s : series) {
    if (s.right_axis != right) continue;
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {};
  const double pad = hi > lo ? 0.1 * (hi - lo) : std::max(0.05, 0.1 * std::abs(hi));
  return {lo - pad, hi + pad};
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::vector<double>& x, const std::string& x_label,
                           const std::vector<Series>& series, const std::string& left_label,
                           const std::string& right_label) {
  if (x.empty()) throw ParameterError("line chart needs at least one x value");
  for (const auto& s : series) {
    if (s.values.size() != x.size()) throw ParameterError("series '" + s.name + "' length differs from the x axis");
  }
  constexpr double width = 640, height = 400, left = 70, right = 70, top = 50, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const double x_lo = *std::min_element(x.begin(), x.end());
  const double x_hi = *std::max_element(x.begin(), x.end());
  const double x_span = x_hi > x_lo ? x_hi - x_lo : 1.0;
  const Range left_range = span_of(series, false);
  const Range right_range = span_of(series, true);
  auto px = [&](double v) { return left + (v - x_lo) / x_span * plot_w; };
  auto py = [&](double v, const Range& r) { return top + (1.0 - (v - r.lo) / (r.hi - r.lo)) * plot_h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height);
  svg += fmt::format("<text x=\"{}\" y=\"25\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", width / 2,
                     escape(title));
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left,
                     top, plot_w, plot_h);
  for (int i = 0; i <= 4; ++i) {
    const double frac = i / 4.0;
    const double y = top + (1.0 - frac) * plot_h;
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3f}</text>\n", left - 6, y + 4,
                       left_range.lo + frac * (left_range.hi - left_range.lo));
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{:.3f}</text>\n", left + plot_w + 6, y + 4,
                       right_range.lo + frac * (right_range.hi - right_range.lo));
  }
  for (double v : x) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:g}</text>\n", px(v), top + plot_h + 18, v);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + plot_w / 2, height - 15,
                     escape(x_label));
  svg += fmt::format("<text transform=\"translate(18 {}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
                     top + plot_h / 2, escape(left_label));
  svg += fmt::format("<text transform=\"translate({} {}) rotate(90)\" text-anchor=\"middle\">{}</text>\n", width - 18,
                     top + plot_h / 2, escape(right_label));

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    const Range& r = ser.right_axis ? right_range : left_range;
    const char* colour = kPalette[s % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < x.size(); ++i) points += fmt::format("{:.2f},{:.2f} ", px(x[i]), py(ser.values[i], r));
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{} points=\"{}\"/>\n", colour,
                       ser.right_axis ? " stroke-dasharray=\"6 4\"" : "", points);
    for (std::size_t i = 0; i < x.size(); ++i) {
      svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(x[i]), py(ser.values[i], r),
                         colour);
    }
    const double ly = top + 14 + 16.0 * static_cast<double>(s);
    svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n", left + 10,
                       ly - 4, left + 30, ly - 4, colour);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}{}</text>\n", left + 36, ly, escape(ser.name),
                       ser.right_axis ? " (right)" : "");
  }
  svg += "</svg>\n";
  return svg;
}

std::string heatmap_svg(const std::string& title, const std::vector<double>& values,
                        const std::vector<std::string>& names) {
  const std::size_t n = names.size();
  if (values.size() != n * n) throw ParameterError("heatmap values do not form a square over the class names");
  constexpr double cell = 48, left = 150, top = 60;
  const double width = left + cell * static_cast<double>(n) + 20;
  const double height = top + cell * static_cast<double>(n) + 130;
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height);
  svg += fmt::format("<text x=\"{}\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", width / 2,
                     escape(title));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = std::clamp(values[r * n + c], 0.0, 1.0);
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
      const double x = left + cell * static_cast<double>(c);
      const double y = top + cell * static_cast<double>(r);
      svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({},{},255)\" stroke=\"#ccc\"/>\n",
                         x, y, cell, cell, shade, shade);
      svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{:.2f}</text>\n", x + cell / 2,
                         y + cell / 2 + 4, v > 0.5 ? "white" : "black", v);
    }
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 6,
                       top + cell * static_cast<double>(r) + cell / 2 + 4, escape(names[r]));
  }
  for (std::size_t c = 0; c < n; ++c) {
    const double x = left + cell * static_cast<double>(c) + cell / 2;
    const double y = top + cell * static_cast<double>(n) + 8;
    svg += fmt::format("<text transform=\"translate({} {}) rotate(45)\">{}</text>\n", x, y, escape(names[c]));
  }
  svg += fmt::format("<text x=\"20\" y=\"{}\">rows: true class, columns: predicted class</text>\n", height - 10);
  svg += "</svg>\n";
  return svg;
}

}  // namespace algotag::plots
