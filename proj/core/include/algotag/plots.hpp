#pragma once

#include <string>
#include <vector>

namespace algotag::plots {

struct Series {
  std::string name;
  std::vector<double> values;
  bool right_axis = false;
};

// Line chart with an independent right-hand axis for the series that ask for
// it. Returns a standalone SVG document.
std::string line_chart_svg(const std::string& title, const std::vector<double>& x, const std::string& x_label,
                           const std::vector<Series>& series, const std::string& left_label,
                           const std::string& right_label);

// Row-major n x n values in [0, 1], rendered with the class names on both axes.
std::string heatmap_svg(const std::string& title, const std::vector<double>& values,
                        const std::vector<std::string>& names);

}  // namespace algotag::plots
