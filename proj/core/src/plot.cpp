#include "invloc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "invloc/common.hpp"

namespace invloc {
namespace fs = std::filesystem;

namespace {

constexpr int kLeft = 70;
constexpr int kRight = 20;
constexpr int kTop = 40;
constexpr int kBottom = 55;

cv::Scalar bgr(const Rgb& c) { return cv::Scalar(c[2], c[1], c[0]); }

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::array<double, 2> padded_range(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.04 * (hi - lo);
  return {lo - pad, hi + pad};
}

struct Frame {
  cv::Mat canvas;
  double x0, x1, y0, y1;
  int w, h;

  cv::Point to_px(double x, double y) const {
    const double px = kLeft + (x - x0) / (x1 - x0) * (w - kLeft - kRight);
    const double py = h - kBottom - (y - y0) / (y1 - y0) * (h - kTop - kBottom);
    return {static_cast<int>(std::lround(px)), static_cast<int>(std::lround(py))};
  }
};

Frame make_frame(const PlotOptions& o, std::array<double, 2> xr, std::array<double, 2> yr, bool numeric_x) {
  Frame f{cv::Mat(o.height, o.width, CV_8UC3, cv::Scalar(255, 255, 255)), xr[0], xr[1], yr[0], yr[1], o.width,
          o.height};
  const cv::Scalar axis(40, 40, 40);
  const cv::Scalar grid(225, 225, 225);
  cv::rectangle(f.canvas, {kLeft, kTop}, {o.width - kRight, o.height - kBottom}, axis, 1);
  for (int i = 0; i <= 5; ++i) {
    const double yv = yr[0] + (yr[1] - yr[0]) * i / 5.0;
    const cv::Point p = f.to_px(xr[0], yv);
    if (i > 0 && i < 5) cv::line(f.canvas, {kLeft + 1, p.y}, {o.width - kRight - 1, p.y}, grid, 1);
    cv::putText(f.canvas, tick_label(yv), {4, p.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
    if (numeric_x) {
      const double xv = xr[0] + (xr[1] - xr[0]) * i / 5.0;
      const cv::Point q = f.to_px(xv, yr[0]);
      cv::putText(f.canvas, tick_label(xv), {q.x - 15, o.height - kBottom + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                  axis, 1, cv::LINE_AA);
    }
  }
  cv::putText(f.canvas, o.title, {kLeft, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.6, axis, 1, cv::LINE_AA);
  cv::putText(f.canvas, o.x_label, {o.width / 2 - 40, o.height - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1,
              cv::LINE_AA);
  cv::putText(f.canvas, o.y_label, {4, kTop - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
  return f;
}

void save(const cv::Mat& canvas, const fs::path& path) {
  ensure_parent_dir(path);
  if (!cv::imwrite(path.string(), canvas)) throw Error("cannot write plot " + path.string());
}

}  // namespace

Rgb palette(std::size_t index) {
  static const Rgb colors[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14},
                               {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};
  return colors[index % (sizeof(colors) / sizeof(colors[0]))];
}

void plot_lines(const std::vector<PlotSeries>& series, const PlotOptions& options, const fs::path& path) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw Error("plot series '" + s.label + "' has mismatched x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  auto xr = options.x_range ? *options.x_range : padded_range(xmin, xmax);
  auto yr = options.y_range ? *options.y_range : padded_range(ymin, ymax);
  if (options.equal_aspect) {
    // widen the narrower axis so one unit spans the same pixels on both
    const double px_w = options.width - kLeft - kRight;
    const double px_h = options.height - kTop - kBottom;
    const double scale = std::max((xr[1] - xr[0]) / px_w, (yr[1] - yr[0]) / px_h);
    const double cx = 0.5 * (xr[0] + xr[1]);
    const double cy = 0.5 * (yr[0] + yr[1]);
    xr = {cx - 0.5 * scale * px_w, cx + 0.5 * scale * px_w};
    yr = {cy - 0.5 * scale * px_h, cy + 0.5 * scale * px_h};
  }
  Frame f = make_frame(options, xr, yr, true);
  int legend_y = kTop + 16;
  for (const auto& s : series) {
    const cv::Scalar c = bgr(s.color);
    for (std::size_t i = 1; i < s.x.size(); ++i)
      cv::line(f.canvas, f.to_px(s.x[i - 1], s.y[i - 1]), f.to_px(s.x[i], s.y[i]), c, 2, cv::LINE_AA);
    if (s.markers || s.x.size() == 1)
      for (std::size_t i = 0; i < s.x.size(); ++i) cv::circle(f.canvas, f.to_px(s.x[i], s.y[i]), 3, c, -1, cv::LINE_AA);
    if (!s.label.empty()) {
      const int lx = options.width - kRight - 160;
      cv::line(f.canvas, {lx, legend_y - 4}, {lx + 20, legend_y - 4}, c, 2, cv::LINE_AA);
      cv::putText(f.canvas, s.label, {lx + 26, legend_y}, cv::FONT_HERSHEY_SIMPLEX, 0.42, cv::Scalar(40, 40, 40),
                  1, cv::LINE_AA);
      legend_y += 18;
    }
  }
  save(f.canvas, path);
}

void plot_bars(const std::vector<std::string>& labels, const std::vector<double>& values, const PlotOptions& options,
               const fs::path& path) {
  if (labels.size() != values.size()) throw Error("bar plot: labels and values differ in length");
  double ymax = 0.0;
  for (double v : values) ymax = std::max(ymax, v);
  const auto yr = options.y_range ? *options.y_range : std::array<double, 2>{0.0, ymax > 0 ? ymax * 1.1 : 1.0};
  const double n = static_cast<double>(std::max<std::size_t>(labels.size(), 1));
  Frame f = make_frame(options, {0.0, n}, yr, false);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const cv::Point top = f.to_px(i + 0.15, values[i]);
    const cv::Point base = f.to_px(i + 0.85, yr[0]);
    cv::rectangle(f.canvas, top, base, bgr(palette(0)), -1);
    cv::putText(f.canvas, labels[i], {top.x - 2, options.height - kBottom + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                cv::Scalar(40, 40, 40), 1, cv::LINE_AA);
    cv::putText(f.canvas, tick_label(values[i]), {top.x, top.y - 4}, cv::FONT_HERSHEY_SIMPLEX, 0.33,
                cv::Scalar(40, 40, 40), 1, cv::LINE_AA);
  }
  save(f.canvas, path);
}

}  // namespace invloc
