// SPDX-License-Identifier: Apache-2.0
//
// Camera poses and the multiscale pose sampler: pick a random cloud point,
// draw one viewing direction, and place one camera per configured distance
// on the line through that point, all facing it.

#ifndef MVLABEL_CAMERA_HPP
#define MVLABEL_CAMERA_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"
#include "mvlabel/random.hpp"

namespace mvlabel {

/// Average bunch radius the fixed view distances were tuned for.
inline constexpr double kReferenceBunchRadius = 94.5;

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

struct CameraPose {
  Vec3d target = Vec3d::Zero();
  double distance = 40.0;
  double azimuth = 0.0;    // degrees, [0, 360)
  double elevation = 0.0;  // degrees, [-90, 90]

  Vec3d direction() const {
    const double a = deg2rad(azimuth), e = deg2rad(elevation);
    return {std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e)};
  }
  Vec3d position() const { return target + distance * direction(); }

  friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

struct ViewConfig {
  int image_size = 224;
  double vertical_fov = 60.0;  // degrees
  std::vector<double> distances{20.0, 40.0, 60.0};
  double znear = 1.0;
  std::uint64_t seed = 0;
  /// World-space splat radius in mm; the pipeline sets it to the voxel size.
  double splat_radius = 0.4;
  /// Scale distances by measured_radius / 94.5 instead of using them as-is.
  bool radius_relative = false;

  void validate() const {
    if (image_size < 32) throw ParameterError("image_size must be >= 32");
    if (!(vertical_fov > 0.0 && vertical_fov < 180.0)) {
      throw ParameterError("vertical_fov must be in (0, 180)");
    }
    if (distances.empty()) throw ParameterError("at least one view distance required");
    for (double d : distances)
      if (!(d > 0.0)) throw ParameterError("view distances must be > 0");
    if (!(znear > 0.0)) throw ParameterError("znear must be > 0");
    if (!(splat_radius > 0.0)) throw ParameterError("splat_radius must be > 0");
  }

  double focal_px() const {
    return 0.5 * image_size / std::tan(deg2rad(vertical_fov) / 2.0);
  }
};

/// Orthonormal look-at basis. Falls back to +X as up when looking along Z.
struct CameraFrame {
  Vec3d position, forward, right, up;

  explicit CameraFrame(const CameraPose& pose) {
    position = pose.position();
    forward = (pose.target - position).normalized();
    Vec3d r = forward.cross(Vec3d::UnitZ());
    if (r.norm() < 1e-9) r = forward.cross(Vec3d::UnitX());
    right = r.normalized();
    up = right.cross(forward);
  }
};

/// Continuous pixel coordinates (x right, y down) and camera-space depth.
struct Projection {
  double x = 0, y = 0;
  double depth = 0;  // along the view axis
};

struct PinholeCamera {
  CameraFrame frame;
  double focal;
  double cx, cy;

  PinholeCamera(const CameraPose& pose, const ViewConfig& config)
      : frame(pose),
        focal(config.focal_px()),
        cx(0.5 * config.image_size),
        cy(0.5 * config.image_size) {}

  Projection project(const Vec3d& p) const {
    const Vec3d rel = p - frame.position;
    const double z = rel.dot(frame.forward);
    return {cx + focal * rel.dot(frame.right) / z, cy - focal * rel.dot(frame.up) / z, z};
  }
};

enum : std::uint64_t { kStreamPoses = 1, kStreamSynth = 2 };

/// n_targets x |distances| poses. Azimuth/elevation are drawn once per target
/// and shared by its cameras. The stream is prefix-stable: more targets only
/// appends poses.
inline std::vector<CameraPose> sample_poses(const PointCloud& cloud, const ViewConfig& config,
                                            std::size_t n_targets,
                                            std::optional<double> measured_radius = std::nullopt) {
  if (cloud.empty()) throw ParameterError("sample_poses: empty input");
  if (n_targets < 1) throw ParameterError("sample_poses: n_targets must be >= 1");
  config.validate();
  double scale = 1.0;
  if (config.radius_relative) {
    scale = measured_radius.value_or(bounding_radius(cloud)) / kReferenceBunchRadius;
    if (!(scale > 0.0)) throw ParameterError("radius-relative distances need a non-zero radius");
  }
  Rng rng(mix_seed(config.seed, kStreamPoses));
  std::vector<CameraPose> poses;
  poses.reserve(n_targets * config.distances.size());
  for (std::size_t t = 0; t < n_targets; ++t) {
    const auto idx = rng.index(cloud.size());
    const double az = rng.uniform(0.0, 360.0);
    const double el = rng.uniform(-90.0, 90.0);
    for (double d : config.distances) {
      poses.push_back({cloud.positions[idx].cast<double>(), d * scale, az, el});
    }
  }
  return poses;
}

/// The first n_pairs poses of the sampler's stream.
inline std::vector<CameraPose> sample_view_pairs(const PointCloud& cloud, const ViewConfig& config,
                                                 std::size_t n_pairs,
                                                 std::optional<double> measured_radius = std::nullopt) {
  if (n_pairs < 1) throw ParameterError("number of image pairs must be >= 1");
  const std::size_t per = config.distances.size();
  auto poses = sample_poses(cloud, config, (n_pairs + per - 1) / std::max<std::size_t>(per, 1),
                            measured_radius);
  poses.resize(n_pairs);
  return poses;
}

}  // namespace mvlabel

#endif  // MVLABEL_CAMERA_HPP
