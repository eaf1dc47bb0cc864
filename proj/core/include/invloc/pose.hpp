#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "invloc/common.hpp"

namespace invloc {

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

/// Unit quaternion with w >= 0. Throws on a zero quaternion.
Eigen::Quaterniond canonical_quaternion(const Eigen::Quaterniond& q);

struct PoseEntry {
  FrameId frame = 0;
  Pose pose;
};

/// Poses ordered by strictly increasing frame id.
struct PoseTrack {
  std::vector<PoseEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  const Pose* find(FrameId frame) const;
};

/// Reads `frame,x,y,z,qw,qx,qy,qz` rows. Quaternions are renormalized (warning
/// when off by more than 1e-3) and rows are sorted by frame.
PoseTrack load_pose_file(const std::filesystem::path& path);
void save_pose_file(const PoseTrack& track, const std::filesystem::path& path);

/// Ground-truth query/database frame pairs. A cell (q, d) is a true match when
/// d lies within `tolerance` database positions of a listed partner of q.
struct CorrespondenceSet {
  std::vector<std::pair<FrameId, FrameId>> pairs;
  int tolerance = 0;

  bool empty() const { return pairs.empty(); }
};

CorrespondenceSet identity_correspondences(const std::vector<FrameId>& frames,
                                           int tolerance = 0);
CorrespondenceSet load_correspondences(const std::filesystem::path& path,
                                       int tolerance = 0);
void save_correspondences(const CorrespondenceSet& set, const std::filesystem::path& path);

/// Pairs frames of two traversals by position: candidate pairs within
/// `max_dist` are accepted greedily by ascending distance, one-to-one.
CorrespondenceSet align_by_pose(const PoseTrack& track_a, const PoseTrack& track_b,
                                double max_dist);

}  // namespace invloc
