// SPDX-License-Identifier: Apache-2.0
//
// Voxel-grid decimation that keeps, per occupied voxel, the input point
// closest to the voxel center.

#ifndef MVLABEL_VOXEL_HPP
#define MVLABEL_VOXEL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"

namespace mvlabel {

struct VoxelParams {
  double voxel_size = 0.4;
  /// Grid anchor. Defaults to the cloud's min corner floored to a voxel multiple.
  std::optional<Vec3d> origin;
};

using VoxelCoord = std::array<std::int64_t, 3>;

/// Grid geometry resolved against a specific cloud.
struct VoxelGrid {
  double size = 0.0;
  Vec3d origin = Vec3d::Zero();

  static VoxelGrid resolve(const PointCloud& cloud, const VoxelParams& params) {
    if (!(params.voxel_size > 0.0) || !std::isfinite(params.voxel_size)) {
      throw ParameterError("voxel_size must be strictly positive");
    }
    VoxelGrid g;
    g.size = params.voxel_size;
    if (params.origin) {
      g.origin = *params.origin;
    } else {
      Vec3d lo = cloud.positions.front().cast<double>();
      for (const auto& p : cloud.positions) lo = lo.cwiseMin(p.cast<double>());
      for (int a = 0; a < 3; ++a) g.origin[a] = std::floor(lo[a] / g.size) * g.size;
    }
    return g;
  }

  VoxelCoord coord(const Vec3f& p) const {
    VoxelCoord c;
    for (int a = 0; a < 3; ++a) {
      c[a] = static_cast<std::int64_t>(std::floor((static_cast<double>(p[a]) - origin[a]) / size));
    }
    return c;
  }

  Vec3d center(const VoxelCoord& c) const {
    return origin + size * Vec3d(static_cast<double>(c[0]) + 0.5, static_cast<double>(c[1]) + 0.5,
                                 static_cast<double>(c[2]) + 0.5);
  }
};

/// Squared distance with the per-axis terms summed smallest first, so points
/// that mirror each other across the center compare exactly equal.
inline double center_dist2(const Vec3f& p, const Vec3d& center) {
  std::array<double, 3> t;
  for (int a = 0; a < 3; ++a) {
    const double d = static_cast<double>(p[a]) - center[a];
    t[a] = d * d;
  }
  std::sort(t.begin(), t.end());
  return (t[0] + t[1]) + t[2];
}

struct Decimation {
  PointCloud decimated;
  /// For each decimated point, its index in the original cloud.
  std::vector<std::uint32_t> origin_index;
};

/// One point per occupied voxel; ties on distance go to the lowest original
/// index. Output is ordered by voxel coordinate (z, y, x).
inline Decimation voxel_decimate(const PointCloud& cloud, const VoxelParams& params) {
  if (cloud.empty()) throw ParameterError("voxel_decimate: empty input");
  const VoxelGrid grid = VoxelGrid::resolve(cloud, params);

  struct Entry {
    VoxelCoord c;
    double dist2;
    std::uint32_t index;
  };
  std::vector<Entry> entries(cloud.size());
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    const auto c = grid.coord(cloud.positions[i]);
    entries[i] = {c, center_dist2(cloud.positions[i], grid.center(c)), i};
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.c[2], a.c[1], a.c[0], a.dist2, a.index) <
           std::tie(b.c[2], b.c[1], b.c[0], b.dist2, b.index);
  });

  Decimation out;
  out.decimated.scheme = cloud.scheme;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0 && entries[i].c == entries[i - 1].c) continue;
    const auto src = entries[i].index;
    out.origin_index.push_back(src);
    out.decimated.positions.push_back(cloud.positions[src]);
    out.decimated.colors.push_back(cloud.colors[src]);
    if (cloud.labeled()) out.decimated.labels.push_back(cloud.labels[src]);
  }
  return out;
}

}  // namespace mvlabel

#endif  // MVLABEL_VOXEL_HPP
