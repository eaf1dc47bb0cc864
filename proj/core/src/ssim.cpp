#include "invloc/ssim.hpp"

#include <algorithm>
#include <cmath>

namespace invloc {

std::vector<double> gaussian_window(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw Error("SSIM window must be a positive odd size");
  std::vector<double> taps(static_cast<std::size_t>(size));
  const int half = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

int effective_window(int height, int width, int requested) {
  int w = std::min({requested, height, width});
  if (w % 2 == 0) --w;
  if (w < 1) throw Error("SSIM needs a non-empty map");
  return w;
}

namespace {

// Separable valid-region filter of `src` (h×w), output (h-k+1)×(w-k+1).
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int oh = h - k + 1;
  const int ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    const double* in = src.data() + static_cast<std::size_t>(y) * w;
    double* out = rows.data() + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += taps[static_cast<std::size_t>(t)] * in[x + t];
      out[x] = acc;
    }
  }
  std::vector<double> result(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    double* out = result.data() + static_cast<std::size_t>(y) * ow;
    for (int t = 0; t < k; ++t) {
      const double wt = taps[static_cast<std::size_t>(t)];
      const double* in = rows.data() + static_cast<std::size_t>(y + t) * ow;
      for (int x = 0; x < ow; ++x) out[x] += wt * in[x];
    }
  }
  return result;
}

}  // namespace

SsimOperand::SsimOperand(const FusionMap& map, const SsimOptions& options)
    : options_(options), height_(map.height), width_(map.width) {
  if (map.height < 1 || map.width < 1 || map.data.size() != static_cast<std::size_t>(map.height) * map.width)
    throw Error("SSIM: malformed map");
  values_.assign(map.data.begin(), map.data.end());
  for (double v : values_)
    if (!std::isfinite(v)) throw Error("SSIM: non-finite value in map");
  auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
  min_ = *lo;
  max_ = *hi;
  window_ = effective_window(height_, width_, options.window);
  taps_ = gaussian_window(window_, options.sigma);
  std::vector<double> sq(values_.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = values_[i] * values_[i];
  mean_ = filter_valid(values_, height_, width_, taps_);
  mean_sq_ = filter_valid(sq, height_, width_, taps_);
}

double ssim(const SsimOperand& a, const SsimOperand& b) {
  if (a.height_ != b.height_ || a.width_ != b.width_)
    throw Error("SSIM: map shapes differ (" + std::to_string(a.height_) + "x" + std::to_string(a.width_) + " vs " +
                std::to_string(b.height_) + "x" + std::to_string(b.width_) + ")");
  if (a.window_ != b.window_ || a.options_.sigma != b.options_.sigma || a.options_.k1 != b.options_.k1 ||
      a.options_.k2 != b.options_.k2)
    throw Error("SSIM: operands built with different options");
  const double range =
      std::max(std::max(a.max_, b.max_) - std::min(a.min_, b.min_), a.options_.range_floor);
  const double c1 = (a.options_.k1 * range) * (a.options_.k1 * range);
  const double c2 = (a.options_.k2 * range) * (a.options_.k2 * range);

  std::vector<double> prod(a.values_.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = a.values_[i] * b.values_[i];
  const std::vector<double> cross = filter_valid(prod, a.height_, a.width_, a.taps_);

  double total = 0.0;
  for (std::size_t i = 0; i < cross.size(); ++i) {
    const double mx = a.mean_[i];
    const double my = b.mean_[i];
    const double vx = a.mean_sq_[i] - mx * mx;
    const double vy = b.mean_sq_[i] - my * my;
    const double cxy = cross[i] - mx * my;
    total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(cross.size());
}

double ssim(const FusionMap& a, const FusionMap& b, const SsimOptions& options) {
  return ssim(SsimOperand(a, options), SsimOperand(b, options));
}

}  // namespace invloc
