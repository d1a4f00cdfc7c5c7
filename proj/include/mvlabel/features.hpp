// SPDX-License-Identifier: Apache-2.0
//
// Per-point geometry channels for the composite image:
//   normal           PCA normal of the k-NN neighborhood
//   normal_deviation mean (1 - |n_p . n_q|) over the radius neighborhood
//   local_noise      3 * lambda_min / (lambda_0 + lambda_1 + lambda_2)
// Both scalars are clamped to [0, 1].

#ifndef MVLABEL_FEATURES_HPP
#define MVLABEL_FEATURES_HPP

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mvlabel/binary_io.hpp"
#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"
#include "mvlabel/neighbor_index.hpp"
#include "mvlabel/parallel.hpp"

namespace mvlabel {

namespace features_detail {

inline Eigen::Matrix3d covariance(const NeighborIndex& index, const std::vector<Neighbor>& nbrs) {
  Vec3d mean = Vec3d::Zero();
  for (const auto& n : nbrs) mean += index.point(n.index);
  mean /= static_cast<double>(nbrs.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& n : nbrs) {
    const Vec3d d = index.point(n.index) - mean;
    cov.noalias() += d * d.transpose();
  }
  return cov / static_cast<double>(nbrs.size());
}

/// Flip so the component with the largest magnitude is positive.
inline Vec3d canonical_sign(Vec3d n) {
  int axis = 0;
  n.cwiseAbs().maxCoeff(&axis);
  return n[axis] < 0 ? Vec3d(-n) : n;
}

}  // namespace features_detail

struct NormalEstimate {
  std::vector<Vec3f> normals;
  /// Points whose neighborhood collapsed to a single location (normal set to +Z).
  std::size_t degenerate_count = 0;
};

inline NormalEstimate estimate_normals(const PointCloud& cloud, const NeighborIndex& index,
                                       std::size_t k, std::size_t workers = 1) {
  if (k < 3) throw ParameterError("estimate_normals: k must be >= 3");
  if (cloud.size() < k) throw ParameterError("estimate_normals: cloud smaller than k");
  NormalEstimate out;
  out.normals.resize(cloud.size());
  std::atomic<std::size_t> degenerate{0};
  parallel_for(cloud.size(), workers, [&](std::size_t i) {
    const auto nbrs = index.knn(cloud.positions[i].cast<double>(), k);
    const Eigen::Matrix3d cov = features_detail::covariance(index, nbrs);
    if (cov.trace() <= 0.0) {
      out.normals[i] = Vec3f::UnitZ();
      degenerate.fetch_add(1, std::memory_order_relaxed);
      return;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    const Vec3d n = features_detail::canonical_sign(solver.eigenvectors().col(0).normalized());
    out.normals[i] = n.cast<float>().normalized();
  });
  out.degenerate_count = degenerate.load();
  return out;
}

inline std::vector<float> normal_deviation(const PointCloud& cloud, const NeighborIndex& index,
                                           const std::vector<Vec3f>& normals, double radius,
                                           std::size_t workers = 1) {
  if (!(radius > 0.0)) throw ParameterError("normal_deviation: radius must be > 0");
  if (normals.size() != cloud.size()) throw ParameterError("normal_deviation: normals misaligned");
  std::vector<float> out(cloud.size(), 0.0f);
  parallel_for(cloud.size(), workers, [&](std::size_t i) {
    thread_local std::vector<Neighbor> nbrs;
    index.radius_search(cloud.positions[i].cast<double>(), radius, nbrs);
    const Vec3d np = normals[i].cast<double>();
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& n : nbrs) {
      if (n.index == i) continue;
      sum += 1.0 - std::abs(np.dot(normals[n.index].cast<double>()));
      ++count;
    }
    out[i] = count == 0 ? 0.0f : static_cast<float>(std::clamp(sum / count, 0.0, 1.0));
  });
  return out;
}

inline std::vector<float> local_noise(const PointCloud& cloud, const NeighborIndex& index,
                                      double radius, std::size_t workers = 1) {
  if (!(radius > 0.0)) throw ParameterError("local_noise: radius must be > 0");
  std::vector<float> out(cloud.size(), 0.0f);
  parallel_for(cloud.size(), workers, [&](std::size_t i) {
    thread_local std::vector<Neighbor> nbrs;
    index.radius_search(cloud.positions[i].cast<double>(), radius, nbrs);
    if (nbrs.size() < 3) return;
    const Eigen::Matrix3d cov = features_detail::covariance(index, nbrs);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov, Eigen::EigenvaluesOnly);
    const Vec3d ev = solver.eigenvalues().cwiseMax(0.0);
    const double total = ev.sum();
    if (total <= 0.0) return;
    out[i] = static_cast<float>(std::clamp(3.0 * ev[0] / total, 0.0, 1.0));
  });
  return out;
}

struct CompositeAttributes {
  std::vector<Vec3f> normals;
  std::vector<float> normal_deviation;
  std::vector<float> local_noise;

  std::size_t size() const { return normals.size(); }
  friend bool operator==(const CompositeAttributes&, const CompositeAttributes&) = default;
};

struct FeatureParams {
  std::size_t k = 16;
  /// Radius for both scalar channels; 4 x voxel size in the default pipeline.
  double radius = 1.6;
};

inline CompositeAttributes compute_attributes(const PointCloud& cloud, const NeighborIndex& index,
                                              const FeatureParams& params, std::size_t workers = 1,
                                              std::size_t* degenerate = nullptr) {
  CompositeAttributes attrs;
  const std::size_t k = std::min(params.k, cloud.size());
  if (k < 3) {
    attrs.normals.assign(cloud.size(), Vec3f::UnitZ());
    if (degenerate) *degenerate = cloud.size();
  } else {
    auto est = estimate_normals(cloud, index, k, workers);
    attrs.normals = std::move(est.normals);
    if (degenerate) *degenerate = est.degenerate_count;
  }
  attrs.normal_deviation = normal_deviation(cloud, index, attrs.normals, params.radius, workers);
  attrs.local_noise = local_noise(cloud, index, params.radius, workers);
  return attrs;
}

/// "CATT" dump: u32 count, then per point nx, ny, nz, deviation, noise (f32).
inline void write_attributes(const CompositeAttributes& attrs, const std::string& path) {
  auto os = binio::open_out(path);
  binio::put_magic(os, "CATT");
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(attrs.size()));
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    binio::put<float>(os, attrs.normals[i].x());
    binio::put<float>(os, attrs.normals[i].y());
    binio::put<float>(os, attrs.normals[i].z());
    binio::put<float>(os, attrs.normal_deviation[i]);
    binio::put<float>(os, attrs.local_noise[i]);
  }
  binio::finish(os, path);
}

inline CompositeAttributes read_attributes(const std::string& path) {
  auto is = binio::open_in(path);
  binio::expect_magic(is, "CATT", path);
  const auto n = binio::get<std::uint32_t>(is, path);
  CompositeAttributes attrs;
  attrs.normals.resize(n);
  attrs.normal_deviation.resize(n);
  attrs.local_noise.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const float x = binio::get<float>(is, path);
    const float y = binio::get<float>(is, path);
    const float z = binio::get<float>(is, path);
    attrs.normals[i] = Vec3f(x, y, z);
    attrs.normal_deviation[i] = binio::get<float>(is, path);
    attrs.local_noise[i] = binio::get<float>(is, path);
  }
  return attrs;
}

}  // namespace mvlabel

#endif  // MVLABEL_FEATURES_HPP
