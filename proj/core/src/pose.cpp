#include "invloc/pose.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace invloc {
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_double(const std::string& text, const fs::path& path, int line_no) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v))
    throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed number '" + t + "'");
  return v;
}

FrameId parse_frame(const std::string& text, const fs::path& path, int line_no) {
  const std::string t = trim(text);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size())
    throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed frame id '" + t + "'");
  return v;
}

bool is_header(const std::string& line) {
  const std::string t = trim(line);
  return !t.empty() && !std::isdigit(static_cast<unsigned char>(t[0])) && t[0] != '-' &&
         t[0] != '+';
}

}  // namespace

Eigen::Quaterniond canonical_quaternion(const Eigen::Quaterniond& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error("zero or non-finite quaternion");
  Eigen::Quaterniond u(q.coeffs() / n);
  if (u.w() < 0.0) u.coeffs() *= -1.0;
  return u;
}

const Pose* PoseTrack::find(FrameId frame) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), frame,
                             [](const PoseEntry& e, FrameId f) { return e.frame < f; });
  return it != entries.end() && it->frame == frame ? &it->pose : nullptr;
}

PoseTrack load_pose_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pose file " + path.string());
  PoseTrack track;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line_no == 1 && is_header(line)) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 8)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected 8 fields, got " +
                  std::to_string(fields.size()));
    PoseEntry entry;
    entry.frame = parse_frame(fields[0], path, line_no);
    entry.pose.position = {parse_double(fields[1], path, line_no),
                           parse_double(fields[2], path, line_no),
                           parse_double(fields[3], path, line_no)};
    Eigen::Quaterniond q(parse_double(fields[4], path, line_no), parse_double(fields[5], path, line_no),
                         parse_double(fields[6], path, line_no), parse_double(fields[7], path, line_no));
    const double n = q.norm();
    if (!(n > 0.0))
      throw Error(path.string() + ":" + std::to_string(line_no) + ": zero quaternion");
    if (std::abs(n - 1.0) > 1e-3)
      warn(path.string() + ":" + std::to_string(line_no) + ": quaternion norm " +
           std::to_string(n) + " renormalized");
    entry.pose.orientation = Eigen::Quaterniond(q.coeffs() / n);
    track.entries.push_back(entry);
  }
  std::stable_sort(track.entries.begin(), track.entries.end(),
                   [](const PoseEntry& a, const PoseEntry& b) { return a.frame < b.frame; });
  for (std::size_t i = 1; i < track.entries.size(); ++i)
    if (track.entries[i].frame == track.entries[i - 1].frame)
      throw Error(path.string() + ": duplicate frame id " + std::to_string(track.entries[i].frame));
  return track;
}

void save_pose_file(const PoseTrack& track, const fs::path& path) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write pose file " + path.string());
  out << "frame,x,y,z,qw,qx,qy,qz\n" << std::setprecision(17);
  for (const auto& e : track.entries) {
    const auto& p = e.pose.position;
    const auto& q = e.pose.orientation;
    out << e.frame << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << q.w() << ','
        << q.x() << ',' << q.y() << ',' << q.z() << '\n';
  }
}

CorrespondenceSet identity_correspondences(const std::vector<FrameId>& frames, int tolerance) {
  CorrespondenceSet set;
  set.tolerance = tolerance;
  for (FrameId f : frames) set.pairs.emplace_back(f, f);
  return set;
}

CorrespondenceSet load_correspondences(const fs::path& path, int tolerance) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open correspondence file " + path.string());
  CorrespondenceSet set;
  set.tolerance = tolerance;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line_no == 1 && is_header(line)) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 2)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected query_frame,db_frame");
    set.pairs.emplace_back(parse_frame(fields[0], path, line_no), parse_frame(fields[1], path, line_no));
  }
  return set;
}

void save_correspondences(const CorrespondenceSet& set, const fs::path& path) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write correspondence file " + path.string());
  out << "query_frame,db_frame\n";
  for (const auto& [q, d] : set.pairs) out << q << ',' << d << '\n';
}

CorrespondenceSet align_by_pose(const PoseTrack& track_a, const PoseTrack& track_b,
                                double max_dist) {
  if (track_a.empty() || track_b.empty()) throw Error("align_by_pose: empty pose track");
  if (!(max_dist >= 0.0)) throw Error("align_by_pose: max_dist must be non-negative");

  // Bucket track_b on a grid of max_dist cells so only neighbouring cells are scanned.
  const double cell = std::max(max_dist, 1e-9);
  auto key = [cell](const Eigen::Vector3d& p) {
    return std::tuple<long long, long long, long long>{
        static_cast<long long>(std::floor(p.x() / cell)),
        static_cast<long long>(std::floor(p.y() / cell)),
        static_cast<long long>(std::floor(p.z() / cell))};
  };
  struct KeyHash {
    std::size_t operator()(const std::tuple<long long, long long, long long>& k) const {
      return static_cast<std::size_t>(splitmix64(static_cast<std::uint64_t>(std::get<0>(k)) ^
                                                 splitmix64(static_cast<std::uint64_t>(std::get<1>(k)) ^
                                                            splitmix64(static_cast<std::uint64_t>(std::get<2>(k))))));
    }
  };
  std::unordered_map<std::tuple<long long, long long, long long>, std::vector<std::size_t>, KeyHash> grid;
  for (std::size_t j = 0; j < track_b.size(); ++j)
    grid[key(track_b.entries[j].pose.position)].push_back(j);

  struct Candidate {
    double dist;
    std::size_t a, b;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < track_a.size(); ++i) {
    const auto& p = track_a.entries[i].pose.position;
    const auto [kx, ky, kz] = key(p);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({kx + dx, ky + dy, kz + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            const double d = (track_b.entries[j].pose.position - p).norm();
            if (d <= max_dist) candidates.push_back({d, i, j});
          }
        }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    return std::tie(x.dist, x.a, x.b) < std::tie(y.dist, y.a, y.b);
  });

  std::vector<bool> used_a(track_a.size(), false), used_b(track_b.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> accepted;
  for (const auto& c : candidates) {
    if (used_a[c.a] || used_b[c.b]) continue;
    used_a[c.a] = used_b[c.b] = true;
    accepted.emplace_back(c.a, c.b);
  }
  std::sort(accepted.begin(), accepted.end());

  CorrespondenceSet set;
  for (const auto& [i, j] : accepted)
    set.pairs.emplace_back(track_a.entries[i].frame, track_b.entries[j].frame);
  if (set.pairs.empty()) warn("align_by_pose: no frames within " + std::to_string(max_dist) + " m");
  return set;
}

}  // namespace invloc
