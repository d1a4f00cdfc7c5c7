// SPDX-License-Identifier: Apache-2.0
//
// Deterministic software splat renderer. Each point is stamped as a
// screen-space square; the nearest point (Euclidean distance to the camera)
// owns a pixel, lower point id on exact ties.

#ifndef MVLABEL_RENDER_HPP
#define MVLABEL_RENDER_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvlabel/camera.hpp"
#include "mvlabel/cloud.hpp"
#include "mvlabel/features.hpp"
#include "mvlabel/image.hpp"

namespace mvlabel {

struct ViewRender {
  RgbImage rgb;
  RgbImage composite;  // red = local noise, green = normal deviation, blue = depth code
  IndexMap index_map;
  DepthMap depth_map;  // mm, +inf where empty
  CameraPose pose;

  int width() const { return rgb.width; }
  int height() const { return rgb.height; }
};

/// Pixel footprint of one point's splat.
struct Splat {
  int cx = 0, cy = 0;  // center pixel
  int half = 0;        // covers [cx-half, cx+half] x [cy-half, cy+half]
  double distance = 0; // Euclidean, camera to point
  bool visible = false;
};

inline Splat project_splat(const PinholeCamera& cam, const Vec3d& p, const ViewConfig& config) {
  Splat s;
  const Projection pr = cam.project(p);
  if (!(pr.depth >= config.znear)) return s;
  if (!(pr.x >= 0.0 && pr.x < config.image_size && pr.y >= 0.0 && pr.y < config.image_size)) {
    return s;
  }
  s.cx = static_cast<int>(std::floor(pr.x));
  s.cy = static_cast<int>(std::floor(pr.y));
  s.half = std::max(1, static_cast<int>(std::lround(cam.focal * config.splat_radius / pr.depth)));
  s.distance = (p - cam.frame.position).norm();
  s.visible = true;
  return s;
}

inline std::uint8_t unit_to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

/// `cloud_radius` is bounding_radius(cloud); it fixes the far end of the
/// depth code at pose.distance + 2 * radius.
inline ViewRender render(const PointCloud& cloud, const CompositeAttributes& attrs,
                         const CameraPose& pose, const ViewConfig& config, double cloud_radius) {
  if (attrs.size() != cloud.size()) throw ParameterError("render: attributes misaligned with cloud");
  const int n = config.image_size;
  ViewRender out;
  out.pose = pose;
  out.rgb = RgbImage(n, n, 3, 0);
  out.composite = RgbImage(n, n, 3, 0);
  out.index_map = IndexMap(n, n, 1, kEmptyIndex);
  out.depth_map = DepthMap(n, n, 1, std::numeric_limits<float>::infinity());

  const PinholeCamera cam(pose, config);
  std::vector<double> zbuf(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::infinity());
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    const Splat s = project_splat(cam, cloud.positions[i].cast<double>(), config);
    if (!s.visible) continue;
    const int x0 = std::max(0, s.cx - s.half), x1 = std::min(n - 1, s.cx + s.half);
    const int y0 = std::max(0, s.cy - s.half), y1 = std::min(n - 1, s.cy + s.half);
    for (int y = y0; y <= y1; ++y) {
      double* row = zbuf.data() + static_cast<std::size_t>(y) * n;
      std::uint32_t* ids = out.index_map.data.data() + static_cast<std::size_t>(y) * n;
      for (int x = x0; x <= x1; ++x) {
        // Ascending id order + strict compare keeps the lower id on ties.
        if (s.distance < row[x]) {
          row[x] = s.distance;
          ids[x] = i;
        }
      }
    }
  }

  const double zfar = pose.distance + 2.0 * cloud_radius;
  const double span = std::max(zfar - config.znear, 1e-12);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const std::uint32_t id = *out.index_map.at(x, y);
      if (id == kEmptyIndex) continue;
      const double d = zbuf[static_cast<std::size_t>(y) * n + x];
      *out.depth_map.at(x, y) = static_cast<float>(d);
      const Rgb& c = cloud.colors[id];
      std::uint8_t* rgb = out.rgb.at(x, y);
      rgb[0] = c.r;
      rgb[1] = c.g;
      rgb[2] = c.b;
      std::uint8_t* comp = out.composite.at(x, y);
      comp[0] = unit_to_byte(attrs.local_noise[id]);
      comp[1] = unit_to_byte(attrs.normal_deviation[id]);
      comp[2] = unit_to_byte(1.0 - std::clamp((d - config.znear) / span, 0.0, 1.0));
    }
  }
  return out;
}

inline ViewRender render(const PointCloud& cloud, const CompositeAttributes& attrs,
                         const CameraPose& pose, const ViewConfig& config) {
  return render(cloud, attrs, pose, config, bounding_radius(cloud));
}

/// Per-view ground-truth label image: class id per pixel, 255 where empty.
inline GrayImage label_image(const IndexMap& index_map, const std::vector<ClassId>& labels) {
  GrayImage img(index_map.width, index_map.height, 1, 255);
  for (std::size_t p = 0; p < index_map.data.size(); ++p) {
    const auto id = index_map.data[p];
    if (id != kEmptyIndex) img.data[p] = labels.at(id);
  }
  return img;
}

inline nlohmann::json pose_to_json(const CameraPose& pose) {
  return {{"target", {pose.target.x(), pose.target.y(), pose.target.z()}},
          {"distance", pose.distance},
          {"azimuth", pose.azimuth},
          {"elevation", pose.elevation}};
}

inline CameraPose pose_from_json(const nlohmann::json& j) {
  CameraPose p;
  const auto& t = j.at("target");
  p.target = Vec3d(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  p.distance = j.at("distance").get<double>();
  p.azimuth = j.at("azimuth").get<double>();
  p.elevation = j.at("elevation").get<double>();
  return p;
}

struct ExportedView {
  int view_id = 0;
  std::string rgb_path, comp_path, idx_path;
  std::string label_path;  // only when ground truth was exported
  CameraPose pose;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"view_id", view_id},
                        {"rgb_path", rgb_path},
                        {"comp_path", comp_path},
                        {"idx_path", idx_path},
                        {"pose", pose_to_json(pose)}};
    if (!label_path.empty()) j["label_path"] = label_path;
    return j;
  }

  static ExportedView from_json(const nlohmann::json& j) {
    ExportedView v;
    v.view_id = j.at("view_id").get<int>();
    v.rgb_path = j.at("rgb_path").get<std::string>();
    v.comp_path = j.at("comp_path").get<std::string>();
    v.idx_path = j.at("idx_path").get<std::string>();
    if (j.contains("label_path")) v.label_path = j.at("label_path").get<std::string>();
    v.pose = pose_from_json(j.at("pose"));
    return v;
  }
};

/// Writes rgb_<id>.png, comp_<id>.png and idx_<id>.bin into `dir` (depth is
/// not stored). Paths in the returned entry are absolute.
inline ExportedView export_view(const ViewRender& view, const std::string& dir, int view_id) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path base = fs::absolute(dir);
  const std::string id = std::to_string(view_id);
  ExportedView e;
  e.view_id = view_id;
  e.pose = view.pose;
  e.rgb_path = (base / ("rgb_" + id + ".png")).string();
  e.comp_path = (base / ("comp_" + id + ".png")).string();
  e.idx_path = (base / ("idx_" + id + ".bin")).string();
  write_png(view.rgb, e.rgb_path);
  write_png(view.composite, e.comp_path);
  write_index_map(view.index_map, e.idx_path);
  return e;
}

inline nlohmann::json manifest_json(const std::vector<ExportedView>& views) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : views) arr.push_back(v.to_json());
  return arr;
}

inline std::vector<ExportedView> manifest_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() ? j.at("views") : j;
  std::vector<ExportedView> out;
  for (const auto& v : arr) out.push_back(ExportedView::from_json(v));
  return out;
}

}  // namespace mvlabel

#endif  // MVLABEL_RENDER_HPP
