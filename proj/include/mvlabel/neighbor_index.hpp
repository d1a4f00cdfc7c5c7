// SPDX-License-Identifier: Apache-2.0
//
// Exact k-nearest and radius search over a static point set (kd-tree).
// Results are ordered by (squared distance, point index), so equal-distance
// ties always resolve to the lower index.

#ifndef MVLABEL_NEIGHBOR_INDEX_HPP
#define MVLABEL_NEIGHBOR_INDEX_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"

namespace mvlabel {

struct Neighbor {
  std::uint32_t index = 0;
  double dist2 = 0.0;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

inline double squared_distance(const Vec3d& a, const Vec3d& b) { return (a - b).squaredNorm(); }

class NeighborIndex {
 public:
  static constexpr std::uint32_t kLeafSize = 12;

  explicit NeighborIndex(std::span<const Vec3f> points) {
    if (points.empty()) throw ParameterError("build_index: empty input");
    pts_.reserve(points.size());
    for (const auto& p : points) pts_.push_back(p.cast<double>());
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(order_.size()));
  }

  explicit NeighborIndex(const PointCloud& cloud) : NeighborIndex(std::span(cloud.positions)) {}

  std::size_t size() const { return pts_.size(); }
  const Vec3d& point(std::uint32_t i) const { return pts_[i]; }

  /// The min(k, size) nearest points, closest first.
  std::vector<Neighbor> knn(const Vec3d& q, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (k == 0) return heap;
    heap.reserve(k + 1);
    knn_rec(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

  Neighbor nearest(const Vec3d& q) const { return knn(q, 1).front(); }

  /// All points within `radius` (inclusive), closest first.
  std::vector<Neighbor> radius_search(const Vec3d& q, double radius) const {
    std::vector<Neighbor> out;
    radius_search(q, radius, out);
    return out;
  }

  void radius_search(const Vec3d& q, double radius, std::vector<Neighbor>& out) const {
    out.clear();
    if (radius < 0) return;
    radius_rec(0, q, radius * radius, out);
    std::sort(out.begin(), out.end());
  }

 private:
  struct Node {
    // leaf: [begin, end) into order_; inner: split axis/value and children
    std::uint32_t begin = 0, end = 0;
    std::uint32_t left = 0, right = 0;
    double split = 0.0;
    std::int8_t axis = -1;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({begin, end, 0, 0, 0.0, -1});
    if (end - begin <= kLeafSize) return id;

    Vec3d lo = pts_[order_[begin]], hi = lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(pts_[order_[i]]);
      hi = hi.cwiseMax(pts_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;  // all coincident

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return pts_[a][axis] < pts_[b][axis]; });
    const double split = pts_[order_[mid]][axis];
    const std::uint32_t l = build(begin, mid);
    const std::uint32_t r = build(mid, end);
    auto& n = nodes_[id];
    n.axis = static_cast<std::int8_t>(axis);
    n.split = split;
    n.left = l;
    n.right = r;
    return id;
  }

  // Left child holds coordinates <= split, right child >= split.
  void knn_rec(std::uint32_t id, const Vec3d& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        Neighbor cand{order_[i], squared_distance(q, pts_[order_[i]])};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::uint32_t near = diff <= 0 ? n.left : n.right;
    const std::uint32_t far = diff <= 0 ? n.right : n.left;
    knn_rec(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().dist2) knn_rec(far, q, k, heap);
  }

  void radius_rec(std::uint32_t id, const Vec3d& q, double r2, std::vector<Neighbor>& out) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const double d2 = squared_distance(q, pts_[order_[i]]);
        if (d2 <= r2) out.push_back({order_[i], d2});
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    if (diff <= 0 || diff * diff <= r2) radius_rec(n.left, q, r2, out);
    if (diff >= 0 || diff * diff <= r2) radius_rec(n.right, q, r2, out);
  }

  std::vector<Vec3d> pts_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

inline NeighborIndex build_index(const PointCloud& cloud) { return NeighborIndex(cloud); }

}  // namespace mvlabel

#endif  // MVLABEL_NEIGHBOR_INDEX_HPP
