#pragma once

// Independent reference implementations the library is checked against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "invloc/fusion.hpp"

namespace invloc::testing {

// SSIM by direct summation over a 2-D Gaussian window at every valid offset,
// with the local variances taken about the local mean (two-pass form).
inline double reference_ssim(const FusionMap& a, const FusionMap& b) {
  const int h = a.height, w = a.width;
  int win = std::min({11, h, w});
  if (win % 2 == 0) --win;
  const int half = win / 2;
  std::vector<double> kernel(static_cast<std::size_t>(win * win));
  double ksum = 0.0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      kernel[static_cast<std::size_t>((dy + half) * win + dx + half)] = v;
      ksum += v;
    }
  for (auto& k : kernel) k /= ksum;

  double lo = a.data[0], hi = a.data[0];
  for (const auto* m : {&a, &b})
    for (float v : m->data) {
      lo = std::min<double>(lo, v);
      hi = std::max<double>(hi, v);
    }
  const double range = std::max(hi - lo, 1e-6);
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);

  double total = 0.0;
  int count = 0;
  for (int y = 0; y + win <= h; ++y)
    for (int x = 0; x + win <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double k = kernel[static_cast<std::size_t>(i * win + j)];
          ma += k * a.at(y + i, x + j);
          mb += k * b.at(y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double k = kernel[static_cast<std::size_t>(i * win + j)];
          const double da = a.at(y + i, x + j) - ma, db = b.at(y + i, x + j) - mb;
          va += k * da * da;
          vb += k * db * db;
          cov += k * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

struct BruteCounts {
  std::size_t tp = 0;
  std::size_t predicted = 0;
  std::size_t positives = 0;
  double precision() const { return predicted == 0 ? 1.0 : double(tp) / double(predicted); }
  double recall() const { return double(tp) / double(positives); }
};

// Counts every cell against the threshold; `truth` is row-major.
inline BruteCounts brute_force_pr(const std::vector<float>& scores, const std::vector<std::uint8_t>& truth,
                                  double threshold) {
  BruteCounts c;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const bool predicted = scores[k] >= threshold;
    c.predicted += predicted;
    c.tp += predicted && truth[k];
    c.positives += truth[k];
  }
  return c;
}

// Central differences of a scalar function of one double tensor.
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                      double eps = 1e-6) {
  torch::NoGradGuard no_grad;
  auto base = x.detach().clone();
  auto grad = torch::zeros_like(base);
  auto flat = base.view({-1});
  auto gflat = grad.view({-1});
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + eps;
    const double up = f(base);
    flat[i] = orig - eps;
    const double down = f(base);
    flat[i] = orig;
    gflat[i] = (up - down) / (2 * eps);
  }
  return grad;
}

// Finite-difference agreement. Entries whose gradient is at round-off level on
// both sides (for example a bias feeding an instance norm, whose true gradient
// is exactly zero) are compared absolutely; all others relatively.
struct FdStats {
  static constexpr double kTiny = 1e-6;
  double max_relative = 0.0;
  double max_absolute_tiny = 0.0;
  int tiny = 0;
  int checked = 0;

  void add(double analytic, double numeric) {
    ++checked;
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < kTiny) {
      ++tiny;
      max_absolute_tiny = std::max(max_absolute_tiny, std::abs(analytic - numeric));
    } else {
      max_relative = std::max(max_relative, std::abs(analytic - numeric) / scale);
    }
  }
  bool ok(double rtol) const { return max_relative < rtol && max_absolute_tiny < kTiny; }
};

inline double max_relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric) {
  const auto diff = (analytic - numeric).abs();
  const auto scale = torch::maximum(analytic.abs(), numeric.abs()).clamp_min(1e-6);
  return (diff / scale).max().item<double>();
}

inline FusionMap random_map(std::mt19937_64& rng, int h, int w, double lo = -3.0, double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  FusionMap m;
  m.height = h;
  m.width = w;
  m.data.resize(static_cast<std::size_t>(h) * w);
  for (auto& v : m.data) v = static_cast<float>(u(rng));
  return m;
}

// Unique scratch directory below the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("invloc_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace invloc::testing
