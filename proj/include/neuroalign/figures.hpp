#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace neuroalign {

struct BarSeries {
  std::string name;
  std::vector<double> values;  // one per group; NaN draws no bar
};

struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> groups;
  std::vector<BarSeries> series;
};

struct LineSeries {
  std::string name;
  std::vector<double> y;
  std::vector<double> sem;      // optional shaded band, same length as y
  std::vector<bool> markers;    // optional; true draws a marker under the curve
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;
  std::vector<LineSeries> series;
};

// Deterministic SVG text: fixed layout and number formatting, no timestamps.
std::string render_svg(const BarChart& chart);
std::string render_svg(const LineChart& chart);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace neuroalign
