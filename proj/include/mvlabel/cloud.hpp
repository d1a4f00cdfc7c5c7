// SPDX-License-Identifier: Apache-2.0
//
// Point cloud and label scheme types. Units are millimeters throughout.

#ifndef MVLABEL_CLOUD_HPP
#define MVLABEL_CLOUD_HPP

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mvlabel/error.hpp"

namespace mvlabel {

using Vec3f = Eigen::Vector3f;
using Vec3d = Eigen::Vector3d;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

using ClassId = std::uint8_t;

struct LabelClass {
  ClassId id = 0;
  std::string name;
  Rgb display_color;
  friend bool operator==(const LabelClass&, const LabelClass&) = default;
};

class LabelScheme {
 public:
  static constexpr std::size_t kMinClasses = 2;
  static constexpr std::size_t kMaxClasses = 16;

  LabelScheme() = default;

  explicit LabelScheme(std::vector<LabelClass> classes) : classes_(std::move(classes)) {
    if (classes_.size() < kMinClasses || classes_.size() > kMaxClasses) {
      throw ParameterError("label scheme needs 2..16 classes, got " +
                           std::to_string(classes_.size()));
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      if (classes_[i].id != i) throw ParameterError("label scheme ids must be contiguous from 0");
      if (!names.insert(classes_[i].name).second) {
        throw ParameterError("duplicate class name: " + classes_[i].name);
      }
    }
  }

  /// peduncle, rachis, berries, twigs, hook
  static LabelScheme five_class() {
    return LabelScheme({{0, "peduncle", {230, 159, 0}},
                        {1, "rachis", {86, 180, 233}},
                        {2, "berries", {0, 158, 115}},
                        {3, "twigs", {240, 228, 66}},
                        {4, "hook", {204, 121, 167}}});
  }

  /// five_class() plus sub_twigs, split off from twigs.
  static LabelScheme six_class() {
    auto classes = five_class().classes_;
    classes.push_back({5, "sub_twigs", {213, 94, 0}});
    return LabelScheme(std::move(classes));
  }

  std::size_t size() const { return classes_.size(); }
  bool empty() const { return classes_.empty(); }
  const std::vector<LabelClass>& classes() const { return classes_; }
  const LabelClass& operator[](std::size_t id) const { return classes_.at(id); }
  bool valid(std::size_t id) const { return id < classes_.size(); }

  std::optional<ClassId> find(const std::string& name) const {
    for (const auto& c : classes_)
      if (c.name == name) return c.id;
    return std::nullopt;
  }

  ClassId id_of(const std::string& name) const {
    auto id = find(name);
    if (!id) throw ConfigError("class not in scheme: " + name);
    return *id;
  }

  friend bool operator==(const LabelScheme&, const LabelScheme&) = default;

 private:
  std::vector<LabelClass> classes_;
};

/// Ordered points with colors and optional per-point labels. Positions are
/// stored as float32 so PLY round-trips are exact.
struct PointCloud {
  std::vector<Vec3f> positions;
  std::vector<Rgb> colors;
  std::vector<ClassId> labels;  // empty, or one per point
  std::optional<LabelScheme> scheme;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  bool labeled() const { return !labels.empty(); }

  void reserve(std::size_t n, bool with_labels) {
    positions.reserve(n);
    colors.reserve(n);
    if (with_labels) labels.reserve(n);
  }

  /// Throws ParameterError if any invariant is broken.
  void validate() const {
    if (colors.size() != positions.size()) throw ParameterError("color count != point count");
    if (!labels.empty() && labels.size() != positions.size()) {
      throw ParameterError("labels must cover every point or none");
    }
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (!positions[i].allFinite()) {
        throw ParameterError("non-finite position at point " + std::to_string(i));
      }
    }
    if (scheme && !labels.empty()) {
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!scheme->valid(labels[i])) {
          throw ParameterError("label " + std::to_string(labels[i]) + " at point " +
                               std::to_string(i) + " not in scheme");
        }
      }
    }
  }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

inline Vec3d centroid(const PointCloud& cloud) {
  Vec3d sum = Vec3d::Zero();
  for (const auto& p : cloud.positions) sum += p.cast<double>();
  return sum / static_cast<double>(cloud.size());
}

/// Max distance from the centroid to any point.
inline double bounding_radius(const PointCloud& cloud) {
  if (cloud.empty()) throw ParameterError("bounding_radius: empty input");
  const Vec3d c = centroid(cloud);
  double r2 = 0.0;
  for (const auto& p : cloud.positions) r2 = std::max(r2, (p.cast<double>() - c).squaredNorm());
  return std::sqrt(r2);
}

}  // namespace mvlabel

#endif  // MVLABEL_CLOUD_HPP
