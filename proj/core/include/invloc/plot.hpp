#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace invloc {

using Rgb = std::array<std::uint8_t, 3>;

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  Rgb color{31, 119, 180};
  bool markers = false;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 520;
  bool equal_aspect = false;
  std::optional<std::array<double, 2>> x_range;
  std::optional<std::array<double, 2>> y_range;
};

/// Line chart with axes, ticks and a legend, written as PNG.
void plot_lines(const std::vector<PlotSeries>& series, const PlotOptions& options,
                const std::filesystem::path& path);

/// Vertical bar chart, one bar per label.
void plot_bars(const std::vector<std::string>& labels, const std::vector<double>& values,
               const PlotOptions& options, const std::filesystem::path& path);

/// Distinct colour for series `index`.
Rgb palette(std::size_t index);

}  // namespace invloc
