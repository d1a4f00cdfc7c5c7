// SPDX-License-Identifier: Apache-2.0
//
// Independent brute-force reference implementations used by the tests.
// Nothing here calls into the code paths it checks.

#ifndef MVLABEL_TESTS_ORACLES_HPP
#define MVLABEL_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mvlabel/cloud.hpp"

namespace oracle {

using mvlabel::PointCloud;
using mvlabel::Vec3d;
using mvlabel::Vec3f;

/// Per-voxel linear scan: group by floor((p - origin) / size), keep the
/// member closest to the voxel center (first in index order on ties), and
/// emit voxels in (z, y, x) order.
inline std::vector<std::uint32_t> decimate(const PointCloud& cloud, double size) {
  double lo[3] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::infinity()};
  for (const auto& p : cloud.positions)
    for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], static_cast<double>(p[a]));
  double origin[3];
  for (int a = 0; a < 3; ++a) origin[a] = std::floor(lo[a] / size) * size;

  std::map<std::tuple<long long, long long, long long>, std::vector<std::uint32_t>> members;
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    long long c[3];
    for (int a = 0; a < 3; ++a) {
      c[a] = static_cast<long long>(std::floor((cloud.positions[i][a] - origin[a]) / size));
    }
    members[{c[2], c[1], c[0]}].push_back(i);
  }
  std::vector<std::uint32_t> kept;
  for (const auto& [key, ids] : members) {
    const double center[3] = {origin[0] + (std::get<2>(key) + 0.5) * size,
                              origin[1] + (std::get<1>(key) + 0.5) * size,
                              origin[2] + (std::get<0>(key) + 0.5) * size};
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_id = 0;
    for (auto id : ids) {
      // Exact ties between mirrored points must stay ties, so add in size order.
      double sq[3];
      for (int a = 0; a < 3; ++a) {
        const double d = cloud.positions[id][a] - center[a];
        sq[a] = d * d;
      }
      if (sq[0] > sq[1]) std::swap(sq[0], sq[1]);
      if (sq[1] > sq[2]) std::swap(sq[1], sq[2]);
      if (sq[0] > sq[1]) std::swap(sq[0], sq[1]);
      const double d2 = (sq[0] + sq[1]) + sq[2];
      if (d2 < best) {
        best = d2;
        best_id = id;
      }
    }
    kept.push_back(best_id);
  }
  return kept;
}

inline double dist2(const Vec3f& a, const Vec3d& q) {
  double s = 0;
  for (int k = 0; k < 3; ++k) {
    const double d = static_cast<double>(a[k]) - q[k];
    s += d * d;
  }
  return s;
}

/// k nearest by full scan, ordered by (distance, index).
inline std::vector<std::uint32_t> knn(const std::vector<Vec3f>& pts, const Vec3d& q, std::size_t k) {
  std::vector<std::pair<double, std::uint32_t>> all;
  for (std::uint32_t i = 0; i < pts.size(); ++i) all.push_back({dist2(pts[i], q), i});
  std::sort(all.begin(), all.end());
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

inline std::uint32_t nearest(const std::vector<Vec3f>& pts, const Vec3d& q) {
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t id = 0;
  for (std::uint32_t i = 0; i < pts.size(); ++i) {
    const double d = dist2(pts[i], q);
    if (d < best) {
      best = d;
      id = i;
    }
  }
  return id;
}

/// Confusion matrix by counting every (gt, pred) class pair separately.
inline std::vector<std::vector<std::uint64_t>> confusion(const std::vector<std::uint8_t>& gt,
                                                         const std::vector<std::uint8_t>& pred,
                                                         std::size_t c) {
  std::vector<std::vector<std::uint64_t>> m(c, std::vector<std::uint64_t>(c, 0));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t n = 0; n < gt.size(); ++n) m[i][j] += (gt[n] == i && pred[n] == j);
  return m;
}

struct Metrics {
  double accuracy = 0;
  std::vector<double> iou;
  double aiou = 0;
};

/// Accuracy and IoU by counting point sets directly: intersection is
/// |gt = c and pred = c|, union is |gt = c or pred = c|.
inline Metrics metrics(const std::vector<std::uint8_t>& gt, const std::vector<std::uint8_t>& pred,
                       std::size_t c) {
  Metrics m;
  std::uint64_t correct = 0;
  for (std::size_t n = 0; n < gt.size(); ++n) correct += gt[n] == pred[n];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(gt.size());
  double sum = 0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t inter = 0, uni = 0, in_gt = 0;
    for (std::size_t n = 0; n < gt.size(); ++n) {
      inter += gt[n] == k && pred[n] == k;
      uni += gt[n] == k || pred[n] == k;
      in_gt += gt[n] == k;
    }
    m.iou.push_back(uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0);
    if (in_gt) {
      sum += m.iou.back();
      ++present;
    }
  }
  m.aiou = sum / static_cast<double>(present);
  return m;
}

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<float> u(static_cast<float>(-extent), static_cast<float>(extent));
  std::uniform_int_distribution<int> byte(0, 255);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.positions.push_back({u(rng), u(rng), u(rng)});
    c.colors.push_back({static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                        static_cast<std::uint8_t>(byte(rng))});
  }
  return c;
}

/// Fresh, empty scratch directory below the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mvlabel_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle

#endif  // MVLABEL_TESTS_ORACLES_HPP
