#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "invloc/dataset.hpp"
#include "invloc/pose.hpp"

namespace invloc {

/// Photometric appearance change applied on top of the shared scene rendering.
struct ConditionSpec {
  std::string name;
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  double hue_shift_deg = 0.0;
  double saturation = 1.0;
  double contrast = 1.0;
  double brightness = 0.0;
  double gamma = 1.0;
  double speckle_density = 0.0;
  std::array<double, 3> speckle_color{1.0, 1.0, 1.0};
};

/// spring, summer, fall, winter, morning, overcast, rain. Throws on anything else.
ConditionSpec condition_spec(std::string_view name);
std::vector<std::string> known_conditions();

struct SyntheticDataset {
  MultiDomainDataset dataset;
  PoseTrack poses;
  CorrespondenceSet correspondences;
};

/// Renders the same camera path through a procedural scene once per condition.
/// Geometry and poses are shared; only appearance differs. Pixels are stored on
/// the 8-bit grid so a PNG round trip is lossless.
SyntheticDataset make_synthetic_seasons(std::uint64_t seed, int n_per_condition,
                                        const std::vector<ConditionSpec>& conditions, int size);
SyntheticDataset make_synthetic_seasons(std::uint64_t seed, int n_per_condition,
                                        const std::vector<std::string>& conditions, int size);

/// Writes `<root>/<condition>/<frame>.png`, `poses.csv`, `correspondences.csv`
/// and the manifest beside the root.
void save_synthetic(SyntheticDataset& synthetic, const std::filesystem::path& root);

/// Digest of all pixel data, poses and correspondences.
std::uint64_t dataset_digest(const SyntheticDataset& synthetic);

}  // namespace invloc
