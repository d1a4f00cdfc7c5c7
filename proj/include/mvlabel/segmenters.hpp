// SPDX-License-Identifier: Apache-2.0
//
// 2D segmenters turning an RGB/composite image pair into per-pixel class
// scores. Scores are non-negative and un-normalized.
//
//   oracle    one-hot ground truth looked up through the index map
//   centroid  exp(-|f - c_k|^2 / tau) over the 6-channel pixel feature
//   external  file-batch protocol: `<command> <manifest> <output_dir>`
//             writes score_<view_id>.scm per view

#ifndef MVLABEL_SEGMENTERS_HPP
#define MVLABEL_SEGMENTERS_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sys/wait.h>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvlabel/binary_io.hpp"
#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"
#include "mvlabel/image.hpp"
#include "mvlabel/render.hpp"
#include "mvlabel/scheme_json.hpp"

namespace mvlabel {

struct ScoreMap {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<float> scores;  // row-major pixels, class index fastest

  ScoreMap() = default;
  ScoreMap(int w, int h, int c)
      : width(w), height(h), num_classes(c), scores(static_cast<std::size_t>(w) * h * c, 0.0f) {}

  float* at(std::size_t pixel) { return scores.data() + pixel * num_classes; }
  const float* at(std::size_t pixel) const { return scores.data() + pixel * num_classes; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  /// Finite and non-negative everywhere.
  bool valid() const {
    for (float s : scores)
      if (!std::isfinite(s) || s < 0.0f) return false;
    return true;
  }

  void scale(float factor) {
    for (float& s : scores) s *= factor;
  }

  friend bool operator==(const ScoreMap&, const ScoreMap&) = default;
};

/// SCM1: magic, u32 width, u32 height, u32 num_classes, f32 scores.
inline void write_score_map(const ScoreMap& map, const std::string& path) {
  auto os = binio::open_out(path);
  binio::put_magic(os, "SCM1");
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(map.width));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(map.height));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(map.num_classes));
  os.write(reinterpret_cast<const char*>(map.scores.data()),
           static_cast<std::streamsize>(map.scores.size() * sizeof(float)));
  binio::finish(os, path);
}

inline ScoreMap read_score_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ProtocolError("score file missing: " + path);
  try {
    binio::expect_magic(is, "SCM1", path);
    const auto w = binio::get<std::uint32_t>(is, path);
    const auto h = binio::get<std::uint32_t>(is, path);
    const auto c = binio::get<std::uint32_t>(is, path);
    if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15 || c == 0 || c > LabelScheme::kMaxClasses) {
      throw ParseError(path + ": implausible header " + std::to_string(w) + "x" +
                       std::to_string(h) + "x" + std::to_string(c));
    }
    ScoreMap map(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    const auto bytes = static_cast<std::streamsize>(map.scores.size() * sizeof(float));
    if (!is.read(reinterpret_cast<char*>(map.scores.data()), bytes)) {
      throw ParseError(path + ": truncated payload (expected " + std::to_string(bytes) +
                       " score bytes)");
    }
    return map;
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("malformed score file: ") + e.what());
  }
}

/// Per-class centroids over (r, g, b, comp_r, comp_g, comp_b) / 255.
struct CentroidModel {
  static constexpr int kFeatures = 6;
  using Feature = std::array<double, kFeatures>;

  std::vector<Feature> centroids;
  std::vector<std::string> class_names;
  /// Empty pixels score zero for every class.
  bool background_zero = true;
  double tau = 0.05;

  int num_classes() const { return static_cast<int>(centroids.size()); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["num_classes"] = num_classes();
    j["tau"] = tau;
    j["background_zero"] = background_zero;
    j["class_names"] = class_names;
    j["centroids"] = centroids;
    return j;
  }

  static CentroidModel from_json(const nlohmann::json& j) {
    try {
      CentroidModel m;
      m.tau = j.at("tau").get<double>();
      m.background_zero = j.value("background_zero", true);
      m.class_names = j.value("class_names", std::vector<std::string>{});
      m.centroids = j.at("centroids").get<std::vector<Feature>>();
      if (m.centroids.size() != j.at("num_classes").get<std::size_t>()) {
        throw ParseError("centroid model: num_classes does not match centroid count");
      }
      for (const auto& c : m.centroids)
        for (double v : c)
          if (!std::isfinite(v)) throw ParseError("centroid model: non-finite centroid");
      if (!(m.tau > 0.0)) throw ParseError("centroid model: tau must be > 0");
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("centroid model: ") + e.what());
    }
  }

  void save(const std::string& path) const { write_json_file(to_json(), path); }
  static CentroidModel load(const std::string& path) { return from_json(read_json_file(path)); }

  friend bool operator==(const CentroidModel&, const CentroidModel&) = default;
};

inline CentroidModel::Feature pixel_feature(const RgbImage& rgb, const RgbImage& comp,
                                            std::size_t pixel) {
  const std::uint8_t* a = rgb.data.data() + 3 * pixel;
  const std::uint8_t* b = comp.data.data() + 3 * pixel;
  return {a[0] / 255.0, a[1] / 255.0, a[2] / 255.0, b[0] / 255.0, b[1] / 255.0, b[2] / 255.0};
}

inline double centroid_score(const CentroidModel::Feature& f, const CentroidModel::Feature& c,
                             double tau) {
  double d2 = 0.0;
  for (int k = 0; k < CentroidModel::kFeatures; ++k) d2 += (f[k] - c[k]) * (f[k] - c[k]);
  return std::exp(-d2 / tau);
}

/// One training sample: an image pair, its index map and the per-point
/// ground truth of the rendered cloud.
struct TrainingView {
  const RgbImage& rgb;
  const RgbImage& composite;
  const IndexMap& index_map;
  const std::vector<ClassId>& labels;
};

/// Streams exact integer channel sums so the model is independent of view order.
class CentroidFitter {
 public:
  explicit CentroidFitter(const LabelScheme& scheme)
      : scheme_(scheme), sums_(scheme.size()), counts_(scheme.size(), 0) {}

  void add(const TrainingView& v) {
    if (v.rgb.pixel_count() != v.index_map.pixel_count() ||
        v.composite.pixel_count() != v.index_map.pixel_count()) {
      throw ParameterError("fit_centroids: image and index map sizes differ");
    }
    for (std::size_t p = 0; p < v.index_map.data.size(); ++p) {
      const auto id = v.index_map.data[p];
      if (id == kEmptyIndex) continue;
      const ClassId c = v.labels.at(id);
      if (!scheme_.valid(c)) throw ParameterError("fit_centroids: label outside scheme");
      auto& s = sums_[c];
      for (int k = 0; k < 3; ++k) {
        s[k] += v.rgb.data[3 * p + k];
        s[3 + k] += v.composite.data[3 * p + k];
      }
      ++counts_[c];
    }
  }

  void merge(const CentroidFitter& other) {
    for (std::size_t c = 0; c < sums_.size(); ++c) {
      for (int k = 0; k < CentroidModel::kFeatures; ++k) sums_[c][k] += other.sums_[c][k];
      counts_[c] += other.counts_[c];
    }
  }

  std::uint64_t pixels(ClassId c) const { return counts_.at(c); }

  CentroidModel finish(double tau = 0.05) const {
    CentroidModel m;
    m.tau = tau;
    for (const auto& c : scheme_.classes()) {
      if (counts_[c.id] == 0) {
        throw ParameterError("fit_centroids: class \"" + c.name + "\" has no training pixels");
      }
      CentroidModel::Feature f;
      for (int k = 0; k < CentroidModel::kFeatures; ++k) {
        f[k] = static_cast<double>(sums_[c.id][k]) / (255.0 * static_cast<double>(counts_[c.id]));
      }
      m.centroids.push_back(f);
      m.class_names.push_back(c.name);
    }
    return m;
  }

 private:
  LabelScheme scheme_;
  std::vector<std::array<std::uint64_t, CentroidModel::kFeatures>> sums_;
  std::vector<std::uint64_t> counts_;
};

inline CentroidModel fit_centroids(const std::vector<TrainingView>& views, const LabelScheme& scheme,
                                   double tau = 0.05) {
  CentroidFitter fitter(scheme);
  for (const auto& v : views) fitter.add(v);
  return fitter.finish(tau);
}

enum class SegmenterKind { oracle, centroid, external };

struct SegmenterSpec {
  SegmenterKind kind = SegmenterKind::oracle;
  std::string model_path;  // centroid
  std::string command;     // external
  std::string dir;         // external: working directory for manifests and scores
  std::optional<double> tau;

  void validate() const {
    switch (kind) {
      case SegmenterKind::oracle:
        if (!model_path.empty() || !command.empty() || !dir.empty() || tau) {
          throw ConfigError("oracle segmenter takes no model_path/command/dir/tau");
        }
        break;
      case SegmenterKind::centroid:
        if (!command.empty() || !dir.empty()) {
          throw ConfigError("centroid segmenter takes no command/dir");
        }
        break;
      case SegmenterKind::external:
        if (command.empty()) throw ConfigError("external segmenter requires a command");
        if (!model_path.empty() || tau) throw ConfigError("external segmenter takes no model_path/tau");
        break;
    }
  }

  static SegmenterSpec from_json(const nlohmann::json& j) {
    SegmenterSpec s;
    const auto kind = j.value("kind", std::string("oracle"));
    if (kind == "oracle") s.kind = SegmenterKind::oracle;
    else if (kind == "centroid") s.kind = SegmenterKind::centroid;
    else if (kind == "external") s.kind = SegmenterKind::external;
    else throw ConfigError("unknown segmenter kind: " + kind);
    s.model_path = j.value("model_path", std::string());
    s.command = j.value("command", std::string());
    s.dir = j.value("dir", std::string());
    if (j.contains("tau")) s.tau = j.at("tau").get<double>();
    s.validate();
    return s;
  }

  nlohmann::json to_json() const {
    static const char* names[] = {"oracle", "centroid", "external"};
    nlohmann::json j = {{"kind", names[static_cast<int>(kind)]}};
    if (!model_path.empty()) j["model_path"] = model_path;
    if (!command.empty()) j["command"] = command;
    if (!dir.empty()) j["dir"] = dir;
    if (tau) j["tau"] = *tau;
    return j;
  }
};

inline ScoreMap segment_oracle(const IndexMap& index_map, const std::vector<ClassId>* gt_labels,
                               int num_classes) {
  if (!gt_labels || gt_labels->empty()) {
    throw ConfigError("oracle segmenter requires ground-truth labels");
  }
  ScoreMap out(index_map.width, index_map.height, num_classes);
  for (std::size_t p = 0; p < index_map.data.size(); ++p) {
    const auto id = index_map.data[p];
    if (id == kEmptyIndex) continue;
    const ClassId c = gt_labels->at(id);
    if (c >= num_classes) throw ParameterError("oracle: label outside scheme");
    out.at(p)[c] = 1.0f;
  }
  return out;
}

inline ScoreMap segment_centroid(const CentroidModel& model, const RgbImage& rgb,
                                 const RgbImage& composite, const IndexMap* index_map,
                                 double tau) {
  if (rgb.pixel_count() != composite.pixel_count()) {
    throw ParameterError("segment: rgb and composite sizes differ");
  }
  ScoreMap out(rgb.width, rgb.height, model.num_classes());
  for (std::size_t p = 0; p < rgb.pixel_count(); ++p) {
    if (index_map && index_map->data[p] == kEmptyIndex && model.background_zero) continue;
    const auto f = pixel_feature(rgb, composite, p);
    float* s = out.at(p);
    for (int c = 0; c < model.num_classes(); ++c) {
      s[c] = static_cast<float>(centroid_score(f, model.centroids[c], tau));
    }
  }
  return out;
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') out += "'\\''";
    else out += ch;
  }
  return out + "'";
}

/// Runs the external segmenter once over a manifest and returns the path of
/// each view's score file, in manifest order.
inline std::vector<std::string> run_external(const SegmenterSpec& spec,
                                             const std::vector<ExportedView>& views,
                                             int num_classes, const std::string& work_dir) {
  namespace fs = std::filesystem;
  spec.validate();
  if (spec.kind != SegmenterKind::external) throw ConfigError("run_external: not an external spec");
  const fs::path base = fs::absolute(work_dir);
  const fs::path out_dir = base / "scores";
  fs::create_directories(out_dir);
  const fs::path manifest = base / "manifest.json";
  nlohmann::json j = {{"num_classes", num_classes}, {"views", manifest_json(views)}};
  write_json_file(j, manifest.string());

  const std::string cmd =
      spec.command + " " + shell_quote(manifest.string()) + " " + shell_quote(out_dir.string());
  const int status = std::system(cmd.c_str());
  if (status != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw ProtocolError("external segmenter failed (exit " + std::to_string(code) + "): " + cmd);
  }
  std::vector<std::string> paths;
  paths.reserve(views.size());
  for (const auto& v : views) {
    paths.push_back((out_dir / ("score_" + std::to_string(v.view_id) + ".scm")).string());
  }
  return paths;
}

/// Reads one external score file and checks it against the view it belongs to.
inline ScoreMap read_external_scores(const std::string& path, int width, int height,
                                     int num_classes) {
  ScoreMap m = read_score_map(path);
  if (m.width != width || m.height != height || m.num_classes != num_classes) {
    throw ProtocolError(path + ": dimension mismatch: got " + std::to_string(m.width) + "x" +
                        std::to_string(m.height) + "x" + std::to_string(m.num_classes) +
                        ", expected " + std::to_string(width) + "x" + std::to_string(height) +
                        "x" + std::to_string(num_classes));
  }
  if (!m.valid()) throw ProtocolError(path + ": negative or non-finite scores");
  return m;
}

/// A constructed segmenter; stateless after construction.
class Segmenter {
 public:
  Segmenter(SegmenterSpec spec, int num_classes) : spec_(std::move(spec)), num_classes_(num_classes) {
    spec_.validate();
    if (spec_.kind == SegmenterKind::centroid) {
      if (spec_.model_path.empty()) throw ConfigError("centroid segmenter requires model_path");
      model_ = CentroidModel::load(spec_.model_path);
      check_model();
    }
  }

  Segmenter(CentroidModel model, std::optional<double> tau = std::nullopt)
      : num_classes_(model.num_classes()), model_(std::move(model)) {
    spec_.kind = SegmenterKind::centroid;
    spec_.tau = tau;
  }

  const SegmenterSpec& spec() const { return spec_; }
  SegmenterKind kind() const { return spec_.kind; }
  int num_classes() const { return num_classes_; }
  const CentroidModel* model() const { return model_ ? &*model_ : nullptr; }

  /// external segmenters are batch-only; use run_external.
  ScoreMap segment(const RgbImage& rgb, const RgbImage& composite, const IndexMap& index_map,
                   const std::vector<ClassId>* gt_labels) const {
    if (rgb.pixel_count() != composite.pixel_count() || rgb.pixel_count() != index_map.pixel_count()) {
      throw ParameterError("segment: image sizes differ");
    }
    switch (spec_.kind) {
      case SegmenterKind::oracle: return segment_oracle(index_map, gt_labels, num_classes_);
      case SegmenterKind::centroid:
        return segment_centroid(*model_, rgb, composite, &index_map, spec_.tau.value_or(model_->tau));
      case SegmenterKind::external: break;
    }
    throw ConfigError("external segmenter runs in batch mode only");
  }

  ScoreMap segment(const ViewRender& view, const std::vector<ClassId>* gt_labels) const {
    return segment(view.rgb, view.composite, view.index_map, gt_labels);
  }

 private:
  void check_model() const {
    if (model_->num_classes() != num_classes_) {
      throw ConfigError("centroid model has " + std::to_string(model_->num_classes()) +
                        " classes, scheme has " + std::to_string(num_classes_));
    }
  }

  SegmenterSpec spec_;
  int num_classes_ = 0;
  std::optional<CentroidModel> model_;
};

}  // namespace mvlabel

#endif  // MVLABEL_SEGMENTERS_HPP
