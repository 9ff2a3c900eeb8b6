#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gridcal::cli {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Bars {
  std::vector<double> edges;   // n + 1 bin edges
  std::vector<double> height;  // n bar heights
};

// Minimal self-contained SVG charts. Output depends only on the inputs.

std::string svg_histogram(const std::string& title, const std::string& xlabel, const Bars& bars,
                          const std::vector<Series>& overlays);

std::string svg_lines(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series);

// Row-major height x width values drawn as a grey-scale raster over [lo, hi].
std::string svg_heatmap(const std::string& title, const std::vector<double>& values, std::size_t height,
                        std::size_t width, double lo, double hi);

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

} // namespace gridcal::cli
