// SPDX-License-Identifier: Apache-2.0
//
// Score back-projection: every covered pixel adds its score vector to the
// decimated point it shows; labels are the per-point argmax. Labels then
// move to the full-resolution cloud by nearest neighbor.

#ifndef MVLABEL_BACKPROJECT_HPP
#define MVLABEL_BACKPROJECT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mvlabel/binary_io.hpp"
#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"
#include "mvlabel/image.hpp"
#include "mvlabel/neighbor_index.hpp"
#include "mvlabel/segmenters.hpp"

namespace mvlabel {

class ScoreAccumulator {
 public:
  ScoreAccumulator() = default;
  ScoreAccumulator(std::size_t num_points, int num_classes)
      : num_points_(num_points),
        num_classes_(num_classes),
        sums_(num_points * static_cast<std::size_t>(num_classes), 0.0),
        hits_(num_points, 0) {
    if (num_classes < 1) throw ParameterError("accumulator needs at least one class");
  }

  std::size_t num_points() const { return num_points_; }
  int num_classes() const { return num_classes_; }
  const double* sums(std::size_t point) const { return sums_.data() + point * num_classes_; }
  double* sums(std::size_t point) { return sums_.data() + point * num_classes_; }
  std::uint32_t hits(std::size_t point) const { return hits_[point]; }
  std::uint32_t& hits(std::size_t point) { return hits_[point]; }

  /// Element-wise addition; merging in a fixed order keeps results reproducible.
  void merge(const ScoreAccumulator& other) {
    if (other.num_points_ != num_points_ || other.num_classes_ != num_classes_) {
      throw ParameterError("accumulator merge: shape mismatch");
    }
    for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += other.sums_[i];
    for (std::size_t i = 0; i < hits_.size(); ++i) hits_[i] += other.hits_[i];
  }

  double coverage() const {
    if (num_points_ == 0) return 0.0;
    std::size_t seen = 0;
    for (auto h : hits_) seen += h > 0;
    return static_cast<double>(seen) / static_cast<double>(num_points_);
  }

  friend bool operator==(const ScoreAccumulator&, const ScoreAccumulator&) = default;

 private:
  std::size_t num_points_ = 0;
  int num_classes_ = 0;
  std::vector<double> sums_;
  std::vector<std::uint32_t> hits_;
};

namespace backproject_detail {

inline void check(std::size_t num_points, int num_classes, const IndexMap& index_map,
                  const ScoreMap& scores) {
  if (scores.num_classes != num_classes) {
    throw ParameterError("accumulate: class count mismatch (" + std::to_string(scores.num_classes) +
                         " vs " + std::to_string(num_classes) + ")");
  }
  if (scores.width != index_map.width || scores.height != index_map.height) {
    throw ParameterError("accumulate: score map and index map dimensions differ");
  }
  for (auto id : index_map.data) {
    if (id != kEmptyIndex && id >= num_points) {
      throw ParameterError("accumulate: index map id " + std::to_string(id) + " out of range");
    }
  }
}

}  // namespace backproject_detail

/// Adds one view's scores. Empty pixels are ignored.
inline void accumulate(ScoreAccumulator& acc, const IndexMap& index_map, const ScoreMap& scores) {
  backproject_detail::check(acc.num_points(), acc.num_classes(), index_map, scores);
  const int c = acc.num_classes();
  for (std::size_t p = 0; p < index_map.data.size(); ++p) {
    const auto id = index_map.data[p];
    if (id == kEmptyIndex) continue;
    double* sum = acc.sums(id);
    const float* s = scores.at(p);
    for (int k = 0; k < c; ++k) sum[k] += s[k];
    ++acc.hits(id);
  }
}

/// Sparse per-view partial sum, points in ascending id. Built
/// concurrently, then applied to the accumulator in ascending view id.
struct ViewContribution {
  int num_classes = 0;
  std::vector<std::uint32_t> points;
  std::vector<std::uint32_t> hits;
  std::vector<double> sums;

  static ViewContribution build(std::size_t num_points, const IndexMap& index_map,
                                const ScoreMap& scores) {
    backproject_detail::check(num_points, scores.num_classes, index_map, scores);
    ViewContribution v;
    v.num_classes = scores.num_classes;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (std::size_t p = 0; p < index_map.data.size(); ++p) {
      if (index_map.data[p] != kEmptyIndex) seen.push_back({index_map.data[p], static_cast<std::uint32_t>(p)});
    }
    std::stable_sort(seen.begin(), seen.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (i == 0 || seen[i].first != seen[i - 1].first) {
        v.points.push_back(seen[i].first);
        v.hits.push_back(0);
        v.sums.resize(v.sums.size() + v.num_classes, 0.0);
      }
      double* sum = v.sums.data() + (v.points.size() - 1) * v.num_classes;
      const float* s = scores.at(seen[i].second);
      for (int k = 0; k < v.num_classes; ++k) sum[k] += s[k];
      ++v.hits.back();
    }
    return v;
  }

  void apply(ScoreAccumulator& acc) const {
    if (num_classes != acc.num_classes()) throw ParameterError("contribution: class count mismatch");
    for (std::size_t i = 0; i < points.size(); ++i) {
      double* sum = acc.sums(points[i]);
      for (int k = 0; k < num_classes; ++k) sum[k] += sums[i * num_classes + k];
      acc.hits(points[i]) += hits[i];
    }
  }
};

struct LabelDecision {
  std::vector<ClassId> labels;
  /// Fraction of decimated points hit by at least one pixel.
  double coverage = 0.0;
  /// Points labeled by the nearest-seen fallback.
  std::size_t filled = 0;
};

/// Argmax per point (ties to the lowest class id). Points without hits, or
/// whose summed scores are all zero, take the label of the nearest decided
/// point.
inline LabelDecision decide_labels(const ScoreAccumulator& acc, const PointCloud& decimated) {
  if (decimated.size() != acc.num_points()) {
    throw ParameterError("decide_labels: accumulator and cloud sizes differ");
  }
  LabelDecision out;
  out.labels.assign(acc.num_points(), 0);
  out.coverage = acc.coverage();
  std::vector<Vec3f> decided_pos;
  std::vector<std::uint32_t> decided_ids;
  std::vector<std::uint8_t> decided(acc.num_points(), 0);
  for (std::size_t i = 0; i < acc.num_points(); ++i) {
    if (acc.hits(i) == 0) continue;
    const double* s = acc.sums(i);
    int best = 0;
    for (int k = 1; k < acc.num_classes(); ++k)
      if (s[k] > s[best]) best = k;
    if (!(s[best] > 0.0)) continue;
    out.labels[i] = static_cast<ClassId>(best);
    decided[i] = 1;
    decided_pos.push_back(decimated.positions[i]);
    decided_ids.push_back(static_cast<std::uint32_t>(i));
  }
  if (decided_ids.empty()) throw Error("decide_labels: zero coverage, no point received scores");
  if (decided_ids.size() < acc.num_points()) {
    const NeighborIndex index{std::span<const Vec3f>(decided_pos)};
    for (std::size_t i = 0; i < acc.num_points(); ++i) {
      if (decided[i]) continue;
      const auto nn = index.nearest(decimated.positions[i].cast<double>());
      out.labels[i] = out.labels[decided_ids[nn.index]];
      ++out.filled;
    }
  }
  return out;
}

/// Nearest decimated point's label for every original point (ties to the
/// lower decimated index).
inline PointCloud transfer_labels(const PointCloud& original, const PointCloud& decimated,
                                  const std::vector<ClassId>& decimated_labels) {
  if (decimated.empty()) throw ParameterError("transfer_labels: empty decimated cloud");
  if (decimated_labels.size() != decimated.size()) {
    throw ParameterError("transfer_labels: labels incomplete");
  }
  const NeighborIndex index(decimated);
  PointCloud out;
  out.positions = original.positions;
  out.colors = original.colors;
  out.scheme = decimated.scheme ? decimated.scheme : original.scheme;
  out.labels.resize(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    out.labels[i] = decimated_labels[index.nearest(original.positions[i].cast<double>()).index];
  }
  return out;
}

/// "ACC1": u32 points, u32 classes, then per point u32 hits + f32 sums.
inline void write_accumulator(const ScoreAccumulator& acc, const std::string& path) {
  auto os = binio::open_out(path);
  binio::put_magic(os, "ACC1");
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(acc.num_points()));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(acc.num_classes()));
  for (std::size_t i = 0; i < acc.num_points(); ++i) {
    binio::put<std::uint32_t>(os, acc.hits(i));
    for (int k = 0; k < acc.num_classes(); ++k) binio::put<float>(os, static_cast<float>(acc.sums(i)[k]));
  }
  binio::finish(os, path);
}

inline ScoreAccumulator read_accumulator(const std::string& path) {
  auto is = binio::open_in(path);
  binio::expect_magic(is, "ACC1", path);
  const auto n = binio::get<std::uint32_t>(is, path);
  const auto c = binio::get<std::uint32_t>(is, path);
  if (c == 0 || c > LabelScheme::kMaxClasses) throw ParseError(path + ": bad class count");
  ScoreAccumulator acc(n, static_cast<int>(c));
  for (std::uint32_t i = 0; i < n; ++i) {
    acc.hits(i) = binio::get<std::uint32_t>(is, path);
    for (std::uint32_t k = 0; k < c; ++k) acc.sums(i)[k] = binio::get<float>(is, path);
  }
  return acc;
}

}  // namespace mvlabel

#endif  // MVLABEL_BACKPROJECT_HPP
