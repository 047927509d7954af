#pragma once

#include <string>
#include <utility>
#include <vector>

namespace ncevo {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Standalone SVG line chart with axes, ticks and a legend.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

}  // namespace ncevo
