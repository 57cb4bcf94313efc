#pragma once

#include <string>
#include <utility>
#include <vector>

namespace odg {

// Small static chart renderers; output is a PNG file.

void plot_bars(const std::vector<std::pair<std::string, double>>& bars, double y_max,
               const std::string& path);

// Grouped bars: one group per label, one bar per series entry.
void plot_grouped_bars(const std::vector<std::string>& labels,
                       const std::vector<std::vector<double>>& series, double y_max,
                       const std::string& path);

void plot_curve(const std::vector<std::pair<double, double>>& points, const std::string& path);

}  // namespace odg
