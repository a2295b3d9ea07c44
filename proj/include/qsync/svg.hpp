#pragma once

#include <span>
#include <string>
#include <vector>

namespace qsync {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  /// Base-10 logarithmic y axis; non-positive and non-finite points are
  /// dropped.
  bool log_y = false;
  int width = 800;
  int height = 480;
  /// Series longer than this are thinned by a uniform stride.
  std::size_t max_points = 4000;
};

/// Self-contained SVG line chart with axes, ticks and a legend.
std::string render_svg(const PlotSpec& spec, std::span<const PlotSeries> series);

}  // namespace qsync
