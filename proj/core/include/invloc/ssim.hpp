#pragma once

#include <vector>

#include "invloc/fusion.hpp"

namespace invloc {

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range_floor = 1e-6;
};

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_window(int size, double sigma);

/// Window actually used for an h×w map: the requested size, shrunk to the
/// largest odd size that fits when the map is smaller.
int effective_window(int height, int width, int requested);

/// A map together with its local first and second moments, so one map can be
/// compared against many others without recomputing them.
class SsimOperand {
 public:
  SsimOperand() = default;
  SsimOperand(const FusionMap& map, const SsimOptions& options = {});

  int height() const { return height_; }
  int width() const { return width_; }

 private:
  friend double ssim(const SsimOperand& a, const SsimOperand& b);

  SsimOptions options_;
  int height_ = 0;
  int width_ = 0;
  int window_ = 0;
  std::vector<double> taps_;
  std::vector<double> values_;
  std::vector<double> mean_;     // valid-region local means
  std::vector<double> mean_sq_;  // valid-region local E[x^2]
  double min_ = 0.0;
  double max_ = 0.0;
};

/// Mean local SSIM over the valid window positions. The dynamic range is taken
/// jointly over both maps. Throws on a shape mismatch or non-finite values.
double ssim(const FusionMap& a, const FusionMap& b, const SsimOptions& options = {});
double ssim(const SsimOperand& a, const SsimOperand& b);

}  // namespace invloc
