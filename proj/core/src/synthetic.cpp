#include "invloc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

namespace invloc {
namespace fs = std::filesystem;

namespace {

constexpr double kFrameSpacing = 0.5;  // metres between consecutive frames
constexpr double kCameraHeight = 1.6;
constexpr double kPathAmplitude = 3.0;
constexpr double kPathPeriod = 30.0;
constexpr double kFieldOfViewDeg = 80.0;
constexpr double kCullRadius = 60.0;

using Vec3 = Eigen::Vector3d;

struct Landmark {
  enum class Kind { box, cylinder } kind;
  Vec3 min_corner;  // box: (x0, y0, 0); cylinder: centre (x, y, 0)
  Vec3 max_corner;  // box: (x1, y1, h); cylinder: (r, -, h)
  Vec3 albedo;
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal;
  Vec3 albedo;
};

double path_y(double x) { return kPathAmplitude * std::sin(2.0 * std::numbers::pi * x / kPathPeriod); }

double path_slope(double x) {
  return kPathAmplitude * 2.0 * std::numbers::pi / kPathPeriod *
         std::cos(2.0 * std::numbers::pi * x / kPathPeriod);
}

double hash_unit(std::uint64_t seed, long long ix, long long iy) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B1ULL ^
                                                       static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<long long>(fx), iy = static_cast<long long>(fy);
  const double tx = x - fx, ty = y - fy;
  const double sx = tx * tx * (3 - 2 * tx), sy = ty * ty * (3 - 2 * ty);
  const double a = hash_unit(seed, ix, iy), b = hash_unit(seed, ix + 1, iy);
  const double c = hash_unit(seed, ix, iy + 1), d = hash_unit(seed, ix + 1, iy + 1);
  return (a + (b - a) * sx) + ((c + (d - c) * sx) - (a + (b - a) * sx)) * sy;
}

class Scene {
 public:
  Scene(std::uint64_t seed, double path_length) : texture_seed_(substream_seed(seed, "texture")) {
    std::mt19937_64 rng(substream_seed(seed, "landmarks"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double x0 = -15.0, x1 = path_length + 15.0;
    const int count = static_cast<int>(std::ceil((x1 - x0) / 1.2));
    while (static_cast<int>(landmarks_.size()) < count) {
      const double x = x0 + (x1 - x0) * unit(rng);
      const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
      const double y = path_y(x) + side * (3.0 + 18.0 * unit(rng) * unit(rng));
      Landmark lm;
      const Vec3 hue(unit(rng), unit(rng), unit(rng));
      lm.albedo = 0.15 * Vec3::Ones() + 0.75 * hue;
      if (unit(rng) < 0.55) {
        lm.kind = Landmark::Kind::box;
        const double w = 1.0 + 3.5 * unit(rng), d = 1.0 + 3.5 * unit(rng);
        const double h = 2.0 + 6.0 * unit(rng);
        lm.min_corner = {x - w / 2, y - d / 2, 0.0};
        lm.max_corner = {x + w / 2, y + d / 2, h};
      } else {
        lm.kind = Landmark::Kind::cylinder;
        lm.min_corner = {x, y, 0.0};
        lm.max_corner = {0.2 + 0.6 * unit(rng), 0.0, 2.0 + 4.0 * unit(rng)};
      }
      // Keep the drivable corridor clear.
      const double clearance = lm.kind == Landmark::Kind::box
                                   ? std::max(lm.max_corner.x() - lm.min_corner.x(),
                                              lm.max_corner.y() - lm.min_corner.y()) / 2
                                   : lm.max_corner.x();
      if (std::abs(y - path_y(x)) - clearance < 2.2) continue;
      landmarks_.push_back(lm);
    }
  }

  Vec3 shade(const Vec3& origin, const Vec3& dir) const {
    Hit hit;
    for (const auto* lm : visible_) intersect(*lm, origin, dir, hit);
    if (dir.z() < -1e-9) {
      const double t = -origin.z() / dir.z();
      if (t < hit.t) {
        hit.t = t;
        hit.normal = Vec3::UnitZ();
        const Vec3 p = origin + t * dir;
        hit.albedo = ground_albedo(p.x(), p.y());
      }
    }
    if (!std::isfinite(hit.t)) {
      const double elevation = std::clamp(dir.z() / dir.norm(), 0.0, 1.0);
      return Vec3(0.78, 0.86, 0.95) * (1.0 - elevation) + Vec3(0.35, 0.55, 0.88) * elevation;
    }
    static const Vec3 sun = Vec3(0.45, 0.3, 0.84).normalized();
    const double lambert = std::max(0.0, hit.normal.dot(sun));
    const double haze = 1.0 - std::exp(-hit.t / 90.0);
    const Vec3 lit = hit.albedo * (0.45 + 0.6 * lambert);
    return lit * (1.0 - haze) + Vec3(0.78, 0.84, 0.9) * haze;
  }

  void cull(const Vec3& camera) {
    visible_.clear();
    for (const auto& lm : landmarks_) {
      const double dx = lm.min_corner.x() - camera.x(), dy = lm.min_corner.y() - camera.y();
      if (dx * dx + dy * dy < kCullRadius * kCullRadius) visible_.push_back(&lm);
    }
  }

 private:
  Vec3 ground_albedo(double x, double y) const {
    const double offset = y - path_y(x);
    if (std::abs(offset) < 1.6) {
      // Asphalt with a dashed centre line.
      const bool dash = std::abs(offset) < 0.08 && std::fmod(std::abs(x), 3.0) < 1.5;
      if (dash) return {0.92, 0.9, 0.75};
      const double grain = value_noise(texture_seed_, x * 4.0, y * 4.0);
      return Vec3(0.3, 0.3, 0.32) * (0.85 + 0.3 * grain);
    }
    const double coarse = value_noise(texture_seed_ + 1, x * 0.35, y * 0.35);
    const double fine = value_noise(texture_seed_ + 2, x * 2.5, y * 2.5);
    const double patch = coarse > 0.62 ? 1.0 : 0.0;
    const Vec3 grass(0.3, 0.52, 0.22), soil(0.5, 0.4, 0.28);
    return (grass * (1.0 - patch) + soil * patch) * (0.75 + 0.5 * fine);
  }

  static void intersect(const Landmark& lm, const Vec3& o, const Vec3& d, Hit& hit) {
    if (lm.kind == Landmark::Kind::box) {
      double t0 = 0.0, t1 = hit.t;
      int axis_hit = -1;
      double sign = 0.0;
      for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(d[axis]) < 1e-12) {
          if (o[axis] < lm.min_corner[axis] || o[axis] > lm.max_corner[axis]) return;
          continue;
        }
        double ta = (lm.min_corner[axis] - o[axis]) / d[axis];
        double tb = (lm.max_corner[axis] - o[axis]) / d[axis];
        double s = -1.0;
        if (ta > tb) {
          std::swap(ta, tb);
          s = 1.0;
        }
        if (ta > t0) {
          t0 = ta;
          axis_hit = axis;
          sign = s;
        }
        t1 = std::min(t1, tb);
        if (t0 > t1) return;
      }
      if (axis_hit < 0 || t0 >= hit.t) return;
      hit.t = t0;
      hit.normal = Vec3::Zero();
      hit.normal[axis_hit] = sign;
      hit.albedo = lm.albedo;
    } else {
      const double cx = lm.min_corner.x(), cy = lm.min_corner.y(), r = lm.max_corner.x();
      const double ox = o.x() - cx, oy = o.y() - cy;
      const double a = d.x() * d.x() + d.y() * d.y();
      if (a < 1e-12) return;
      const double b = 2.0 * (ox * d.x() + oy * d.y());
      const double c = ox * ox + oy * oy - r * r;
      const double disc = b * b - 4 * a * c;
      if (disc < 0) return;
      const double t = (-b - std::sqrt(disc)) / (2 * a);
      if (t <= 0 || t >= hit.t) return;
      const double z = o.z() + t * d.z();
      if (z < 0 || z > lm.max_corner.z()) return;
      hit.t = t;
      hit.normal = Vec3(ox + t * d.x(), oy + t * d.y(), 0.0) / r;
      // Vertical bands so cylinders carry some texture.
      const double band = std::fmod(std::max(0.0, z), 0.8) < 0.4 ? 1.0 : 0.8;
      hit.albedo = lm.albedo * band;
    }
  }

  std::uint64_t texture_seed_;
  std::vector<Landmark> landmarks_;
  std::vector<const Landmark*> visible_;
};

Pose camera_pose(int frame) {
  const double x = frame * kFrameSpacing;
  const double yaw = std::atan(path_slope(x));
  const double pitch = (-4.0 + 2.0 * std::sin(x / 7.0)) * std::numbers::pi / 180.0;
  Pose pose;
  pose.position = {x, path_y(x), kCameraHeight};
  // Body frame: x forward, y left, z up.
  pose.orientation = canonical_quaternion(
      Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                         Eigen::AngleAxisd(-pitch, Vec3::UnitY())));
  return pose;
}

std::vector<Vec3> render_base(Scene& scene, const Pose& pose, int size) {
  const Eigen::Matrix3d r = pose.orientation.toRotationMatrix();
  const Vec3 forward = r.col(0), left = r.col(1), up = r.col(2);
  const double focal = (size / 2.0) / std::tan(kFieldOfViewDeg * std::numbers::pi / 360.0);
  scene.cull(pose.position);
  std::vector<Vec3> pixels(static_cast<std::size_t>(size) * size);
  for (int py = 0; py < size; ++py)
    for (int px = 0; px < size; ++px) {
      const double a = (px + 0.5 - size / 2.0) / focal;
      const double b = (py + 0.5 - size / 2.0) / focal;
      const Vec3 dir = (forward - a * left - b * up).normalized();
      pixels[static_cast<std::size_t>(py) * size + px] = scene.shade(pose.position, dir);
    }
  return pixels;
}

Vec3 apply_condition(const ConditionSpec& spec, Vec3 c) {
  c = c.cwiseProduct(Vec3(spec.gain[0], spec.gain[1], spec.gain[2]));
  if (spec.hue_shift_deg != 0.0) {
    // Rotation about the grey axis.
    const double th = spec.hue_shift_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double k = (1.0 - cs) / 3.0, s3 = sn / std::sqrt(3.0);
    Eigen::Matrix3d m;
    m << cs + k, k - s3, k + s3,
         k + s3, cs + k, k - s3,
         k - s3, k + s3, cs + k;
    c = m * c;
  }
  const double grey = c.mean();
  c = Vec3::Constant(grey) + spec.saturation * (c - Vec3::Constant(grey));
  c = (c - Vec3::Constant(0.5)) * spec.contrast + Vec3::Constant(0.5 + spec.brightness);
  for (int i = 0; i < 3; ++i) c[i] = std::pow(std::clamp(c[i], 0.0, 1.0), spec.gamma);
  return c;
}

}  // namespace

ConditionSpec condition_spec(std::string_view name) {
  ConditionSpec s;
  s.name = std::string(name);
  if (name == "spring") {
    s.gain = {0.95, 1.05, 0.95};
  } else if (name == "summer") {
    s.gain = {1.05, 1.05, 0.9};
    s.hue_shift_deg = 8.0;
    s.saturation = 1.25;
    s.contrast = 1.1;
    s.brightness = 0.04;
    s.gamma = 0.9;
  } else if (name == "fall") {
    s.gain = {1.15, 0.9, 0.7};
    s.hue_shift_deg = -30.0;
    s.saturation = 1.1;
    s.brightness = -0.02;
    s.gamma = 1.1;
  } else if (name == "winter") {
    s.gain = {0.95, 1.0, 1.1};
    s.saturation = 0.35;
    s.contrast = 0.75;
    s.brightness = 0.18;
    s.gamma = 0.85;
    s.speckle_density = 0.06;
    s.speckle_color = {0.97, 0.97, 1.0};
  } else if (name == "morning") {
    s.gain = {1.1, 0.95, 0.85};
    s.hue_shift_deg = 12.0;
    s.saturation = 0.9;
    s.contrast = 0.9;
    s.brightness = 0.05;
    s.gamma = 1.15;
  } else if (name == "overcast") {
    s.gain = {0.95, 0.97, 1.0};
    s.saturation = 0.55;
    s.contrast = 0.65;
    s.brightness = -0.02;
  } else if (name == "rain") {
    s.gain = {0.9, 0.92, 1.0};
    s.hue_shift_deg = -6.0;
    s.saturation = 0.6;
    s.contrast = 0.7;
    s.brightness = -0.12;
    s.gamma = 1.1;
    s.speckle_density = 0.03;
    s.speckle_color = {0.75, 0.78, 0.85};
  } else {
    throw Error("unknown condition spec '" + std::string(name) + "'");
  }
  return s;
}

std::vector<std::string> known_conditions() {
  return {"spring", "summer", "fall", "winter", "morning", "overcast", "rain"};
}

SyntheticDataset make_synthetic_seasons(std::uint64_t seed, int n_per_condition,
                                        const std::vector<ConditionSpec>& conditions, int size) {
  if (n_per_condition < 2) throw Error("n_per_condition must be at least 2");
  if (size != 64 && size != 128 && size != 256) throw Error("synthetic size must be 64, 128 or 256");
  if (conditions.empty()) throw Error("at least one condition is required");
  for (std::size_t i = 0; i < conditions.size(); ++i)
    for (std::size_t j = i + 1; j < conditions.size(); ++j)
      if (conditions[i].name == conditions[j].name)
        throw Error("condition listed twice: " + conditions[i].name);

  SyntheticDataset out;
  Scene scene(seed, (n_per_condition - 1) * kFrameSpacing);
  std::vector<FrameId> frames;
  std::vector<std::vector<Vec3>> bases;
  for (int k = 0; k < n_per_condition; ++k) {
    const Pose pose = camera_pose(k);
    out.poses.entries.push_back({k, pose});
    frames.push_back(k);
    bases.push_back(render_base(scene, pose, size));
  }
  out.correspondences = identity_correspondences(frames, 0);

  char name[32];
  for (const auto& spec : conditions) {
    auto& files = out.dataset.manifest[spec.name];
    for (int k = 0; k < n_per_condition; ++k) {
      std::mt19937_64 rng(substream_seed(seed, "speckle/" + spec.name + "/" + std::to_string(k)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      DatasetImage item;
      item.condition = spec.name;
      item.frame = k;
      item.image = ImageTensor(size, size, 3);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          Vec3 c = apply_condition(spec, bases[k][static_cast<std::size_t>(y) * size + x]);
          const double u = unit(rng);
          const double jitter = unit(rng);
          if (u < spec.speckle_density)
            c = Vec3(spec.speckle_color[0], spec.speckle_color[1], spec.speckle_color[2]) *
                (0.9 + 0.1 * jitter);
          for (int ch = 0; ch < 3; ++ch)
            item.image.at(y, x, ch) = static_cast<float>(2.0 * std::clamp(c[ch], 0.0, 1.0) - 1.0);
        }
      quantize_to_8bit(item.image);
      std::snprintf(name, sizeof(name), "%06d.png", k);
      item.source = fs::path(spec.name) / name;
      files.push_back(item.source.generic_string());
      out.dataset.images.push_back(std::move(item));
    }
  }
  return out;
}

SyntheticDataset make_synthetic_seasons(std::uint64_t seed, int n_per_condition,
                                        const std::vector<std::string>& conditions, int size) {
  std::vector<ConditionSpec> specs;
  for (const auto& name : conditions) specs.push_back(condition_spec(name));
  return make_synthetic_seasons(seed, n_per_condition, specs, size);
}

void save_synthetic(SyntheticDataset& synthetic, const fs::path& root) {
  fs::create_directories(root);
  synthetic.dataset.root = root;
  for (auto& item : synthetic.dataset.images) {
    write_png(item.image, root / item.source);
    item.source = root / item.source;
  }
  save_pose_file(synthetic.poses, root / "poses.csv");
  save_correspondences(synthetic.correspondences, root / "correspondences.csv");
  write_manifest(synthetic.dataset);
}

std::uint64_t dataset_digest(const SyntheticDataset& synthetic) {
  std::uint64_t h = fnv1a64(std::string_view("invloc-dataset"));
  for (const auto& item : synthetic.dataset.images) {
    h = fnv1a64(item.condition, h);
    h = fnv1a64(std::as_bytes(std::span(&item.frame, 1)), h);
    h = fnv1a64(std::as_bytes(std::span(item.image.data)), h);
  }
  for (const auto& e : synthetic.poses.entries) {
    const double v[8] = {static_cast<double>(e.frame), e.pose.position.x(), e.pose.position.y(),
                         e.pose.position.z(), e.pose.orientation.w(), e.pose.orientation.x(),
                         e.pose.orientation.y(), e.pose.orientation.z()};
    h = fnv1a64(std::as_bytes(std::span(v)), h);
  }
  for (const auto& p : synthetic.correspondences.pairs) h = fnv1a64(std::as_bytes(std::span(&p, 1)), h);
  return h;
}

}  // namespace invloc
