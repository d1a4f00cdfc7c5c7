// SPDX-License-Identifier: Apache-2.0
//
// End-to-end labeling: decimate -> attributes -> sample/render views ->
// segment -> accumulate -> decide -> transfer.

#ifndef MVLABEL_PIPELINE_HPP
#define MVLABEL_PIPELINE_HPP

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvlabel/backproject.hpp"
#include "mvlabel/camera.hpp"
#include "mvlabel/cloud.hpp"
#include "mvlabel/features.hpp"
#include "mvlabel/metrics.hpp"
#include "mvlabel/neighbor_index.hpp"
#include "mvlabel/parallel.hpp"
#include "mvlabel/render.hpp"
#include "mvlabel/scheme_json.hpp"
#include "mvlabel/segmenters.hpp"
#include "mvlabel/voxel.hpp"

namespace mvlabel {

struct RunConfig {
  double voxel_size = 0.4;
  ViewConfig view;
  std::size_t n_train_pairs = 1800;
  std::size_t n_test_pairs = 1500;
  SegmenterSpec segmenter;
  std::string scheme = "five";
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::size_t normal_k = 16;
  double feature_radius_factor = 4.0;  // x voxel_size
  std::vector<std::size_t> sweep_pairs{30, 150, 300, 600, 900, 1200, 1500};

  LabelScheme label_scheme() const { return scheme_preset(scheme); }

  FeatureParams feature_params() const { return {normal_k, feature_radius_factor * voxel_size}; }

  /// View config with the seed and splat radius bound to this run.
  ViewConfig bound_view() const {
    ViewConfig v = view;
    v.seed = seed;
    v.splat_radius = voxel_size;
    return v;
  }

  void validate() const {
    if (!(voxel_size > 0.0)) throw ParameterError("voxel_size must be > 0");
    bound_view().validate();
    if (n_train_pairs < 1 || n_test_pairs < 1) throw ParameterError("pair counts must be >= 1");
    if (normal_k < 3) throw ParameterError("normal_k must be >= 3");
    if (!(feature_radius_factor > 0.0)) throw ParameterError("feature_radius_factor must be > 0");
    segmenter.validate();
    label_scheme();
  }

  nlohmann::json to_json() const {
    return {{"voxel_size", voxel_size},
            {"view",
             {{"image_size", view.image_size},
              {"vertical_fov", view.vertical_fov},
              {"distances", view.distances},
              {"znear", view.znear},
              {"radius_relative", view.radius_relative}}},
            {"n_train_pairs", n_train_pairs},
            {"n_test_pairs", n_test_pairs},
            {"segmenter", segmenter.to_json()},
            {"scheme", scheme},
            {"seed", seed},
            {"workers", workers},
            {"normal_k", normal_k},
            {"feature_radius_factor", feature_radius_factor},
            {"sweep_pairs", sweep_pairs}};
  }

  /// Missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
      c.voxel_size = j.value("voxel_size", c.voxel_size);
      if (j.contains("view")) {
        const auto& v = j.at("view");
        c.view.image_size = v.value("image_size", c.view.image_size);
        c.view.vertical_fov = v.value("vertical_fov", c.view.vertical_fov);
        c.view.distances = v.value("distances", c.view.distances);
        c.view.znear = v.value("znear", c.view.znear);
        c.view.radius_relative = v.value("radius_relative", c.view.radius_relative);
      }
      c.n_train_pairs = j.value("n_train_pairs", c.n_train_pairs);
      c.n_test_pairs = j.value("n_test_pairs", c.n_test_pairs);
      if (j.contains("segmenter")) c.segmenter = SegmenterSpec::from_json(j.at("segmenter"));
      c.scheme = j.value("scheme", c.scheme);
      c.seed = j.value("seed", c.seed);
      c.workers = j.value("workers", c.workers);
      c.normal_k = j.value("normal_k", c.normal_k);
      c.feature_radius_factor = j.value("feature_radius_factor", c.feature_radius_factor);
      c.sweep_pairs = j.value("sweep_pairs", c.sweep_pairs);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("run config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

/// Runs fn, prefixing any mvlabel error with the stage name (type preserved).
template <typename Fn>
decltype(auto) in_stage(const std::string& stage, Fn&& fn) {
  auto tag = [&](const std::exception& e) { return "[" + stage + "] " + e.what(); };
  try {
    return fn();
  } catch (const ParseError& e) {
    throw ParseError(tag(e));
  } catch (const ParameterError& e) {
    throw ParameterError(tag(e));
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const ProtocolError& e) {
    throw ProtocolError(tag(e));
  } catch (const IoError& e) {
    throw IoError(tag(e));
  } catch (const Error& e) {
    throw Error(tag(e));
  }
}

/// Wall-clock stage timings in milliseconds. Rendering and segmentation run
/// interleaved on the worker pool; their entries are summed worker time.
struct StageTimes {
  std::map<std::string, double> ms;

  void add(const std::string& stage, double v) { ms[stage] += v; }
  nlohmann::json to_json() const { return ms; }
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Decimated cloud plus everything the view loop needs from it.
struct PreparedCloud {
  PointCloud original;
  Decimation decimation;
  CompositeAttributes attributes;
  double radius = 0.0;  // bounding radius of the decimated cloud
  std::size_t degenerate_normals = 0;

  const PointCloud& decimated() const { return decimation.decimated; }
};

inline PreparedCloud prepare_cloud(PointCloud original, const RunConfig& config, StageTimes* times = nullptr) {
  PreparedCloud pc;
  pc.original = std::move(original);
  Stopwatch sw;
  pc.decimation = voxel_decimate(pc.original, {config.voxel_size, std::nullopt});
  if (times) times->add("decimate", sw.ms());
  Stopwatch sw2;
  const NeighborIndex index(pc.decimated());
  pc.attributes = compute_attributes(pc.decimated(), index, config.feature_params(), config.workers,
                                     &pc.degenerate_normals);
  pc.radius = bounding_radius(pc.decimated());
  if (times) times->add("features", sw2.ms());
  return pc;
}

inline std::vector<CameraPose> poses_for(const PreparedCloud& pc, const RunConfig& config,
                                         std::size_t n_pairs) {
  return sample_view_pairs(pc.decimated(), config.bound_view(), n_pairs, pc.radius);
}

/// Runs views [0, poses.size()) through an in-process segmenter, applying
/// each view's contribution in ascending view order. `on_view(count)` is
/// called after the first `count` views have been merged.
template <typename OnView>
void accumulate_views(const PreparedCloud& pc, const RunConfig& config, const Segmenter& seg,
                      const std::vector<CameraPose>& poses, ScoreAccumulator& acc,
                      StageTimes* times, OnView&& on_view) {
  const ViewConfig vc = config.bound_view();
  const std::vector<ClassId>* gt = pc.decimated().labeled() ? &pc.decimated().labels : nullptr;
  const std::size_t workers = resolve_workers(config.workers);
  const std::size_t block = std::max<std::size_t>(8, 4 * workers);
  std::vector<ViewContribution> contrib(block);
  std::vector<double> render_ms(block), segment_ms(block);
  for (std::size_t begin = 0; begin < poses.size(); begin += block) {
    const std::size_t end = std::min(poses.size(), begin + block);
    parallel_for(
        end - begin, workers,
        [&](std::size_t k) {
          Stopwatch sw;
          const ViewRender view = render(pc.decimated(), pc.attributes, poses[begin + k], vc, pc.radius);
          render_ms[k] = sw.ms();
          Stopwatch sw2;
          const ScoreMap scores = seg.segment(view, gt);
          contrib[k] = ViewContribution::build(pc.decimated().size(), view.index_map, scores);
          segment_ms[k] = sw2.ms();
        },
        1);
    Stopwatch sw;
    for (std::size_t k = 0; k < end - begin; ++k) {
      contrib[k].apply(acc);
      if (times) {
        times->add("render", render_ms[k]);
        times->add("segment", segment_ms[k]);
      }
      on_view(begin + k + 1);
    }
    if (times) times->add("backproject", sw.ms());
  }
}

/// External segmenter path: export every view, run the command once, read
/// back score files in view order.
inline void accumulate_external(const PreparedCloud& pc, const RunConfig& config,
                                const std::vector<CameraPose>& poses, ScoreAccumulator& acc,
                                StageTimes* times, const std::string& work_dir) {
  namespace fs = std::filesystem;
  const ViewConfig vc = config.bound_view();
  const fs::path views_dir = fs::path(work_dir) / "views";
  fs::create_directories(views_dir);
  std::vector<ExportedView> exported(poses.size());
  Stopwatch sw;
  parallel_for(
      poses.size(), config.workers,
      [&](std::size_t k) {
        const ViewRender view = render(pc.decimated(), pc.attributes, poses[k], vc, pc.radius);
        exported[k] = export_view(view, views_dir.string(), static_cast<int>(k));
      },
      1);
  if (times) times->add("render", sw.ms());
  Stopwatch sw2;
  const auto paths = run_external(config.segmenter, exported, acc.num_classes(), work_dir);
  if (times) times->add("segment", sw2.ms());
  Stopwatch sw3;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const IndexMap idx = read_index_map(exported[k].idx_path);
    const ScoreMap scores = read_external_scores(paths[k], idx.width, idx.height, acc.num_classes());
    ViewContribution::build(pc.decimated().size(), idx, scores).apply(acc);
  }
  if (times) times->add("backproject", sw3.ms());
}

struct LabelResult {
  PointCloud labeled;  // original resolution
  LabelDecision decision;
  ScoreAccumulator accumulator;
  std::optional<EvalReport> report;
  StageTimes times;
  std::size_t n_views = 0;
};

inline Segmenter make_segmenter(const RunConfig& config) {
  return Segmenter(config.segmenter, static_cast<int>(config.label_scheme().size()));
}

inline void check_labels_for(const PreparedCloud& pc, const RunConfig& config) {
  if (config.segmenter.kind == SegmenterKind::oracle && !pc.original.labeled()) {
    throw ConfigError("oracle segmenter requires a labeled input cloud");
  }
  if (pc.original.labeled()) {
    const auto scheme = config.label_scheme();
    for (auto l : pc.original.labels)
      if (!scheme.valid(l)) {
        throw ConfigError("input label " + std::to_string(l) + " not in " + config.scheme +
                          "-class scheme");
      }
  }
}

/// Finishes a run from its accumulator: decide, transfer and (if ground
/// truth exists) evaluate.
inline void finish_labels(const PreparedCloud& pc, const LabelScheme& scheme, LabelResult& r) {
  Stopwatch sw;
  r.decision = decide_labels(r.accumulator, pc.decimated());
  r.labeled = transfer_labels(pc.original, pc.decimated(), r.decision.labels);
  r.labeled.scheme = scheme;
  r.times.add("backproject", sw.ms());
  if (pc.original.labeled()) r.report = evaluate(pc.original.labels, r.labeled.labels, scheme);
}

inline LabelResult label_prepared(const PreparedCloud& pc, const RunConfig& config,
                                  std::size_t n_pairs, const std::string& work_dir = {}) {
  check_labels_for(pc, config);
  const auto scheme = config.label_scheme();
  LabelResult r;
  r.accumulator = ScoreAccumulator(pc.decimated().size(), static_cast<int>(scheme.size()));
  const auto poses = poses_for(pc, config, n_pairs);
  r.n_views = poses.size();
  in_stage("views+segment", [&] {
    if (config.segmenter.kind == SegmenterKind::external) {
      std::string dir = work_dir.empty() ? config.segmenter.dir : work_dir;
      if (dir.empty()) throw ConfigError("external segmenter needs a working dir");
      accumulate_external(pc, config, poses, r.accumulator, &r.times, dir);
    } else {
      const Segmenter seg = make_segmenter(config);
      accumulate_views(pc, config, seg, poses, r.accumulator, &r.times, [](std::size_t) {});
    }
  });
  in_stage("backproject", [&] { finish_labels(pc, scheme, r); });
  return r;
}

/// cmd_label core: uses n_test_pairs views.
inline LabelResult label_cloud(PointCloud original, const RunConfig& config,
                               const std::string& work_dir = {}) {
  config.validate();
  StageTimes prep;
  {
    PreparedCloud probe;
    probe.original = original;
    check_labels_for(probe, config);
  }
  const PreparedCloud pc =
      in_stage("preprocess", [&] { return prepare_cloud(std::move(original), config, &prep); });
  LabelResult r = label_prepared(pc, config, config.n_test_pairs, work_dir);
  for (const auto& [k, v] : prep.ms) r.times.add(k, v);
  return r;
}

/// JSON emitted by `label`; everything except "timing_ms" is deterministic.
inline nlohmann::json label_summary(const LabelResult& r) {
  nlohmann::json j = {{"n_views", r.n_views},
                      {"n_points", r.labeled.size()},
                      {"n_decimated", r.decision.labels.size()},
                      {"coverage", r.decision.coverage},
                      {"fallback_filled", r.decision.filled},
                      {"timing_ms", r.times.to_json()}};
  if (r.report) j["eval"] = report_to_json(*r.report);
  return j;
}

/// Centroid training over labeled clouds, n_train_pairs views each. Cloud i
/// draws its poses from stream mix_seed(seed, i).
inline CentroidModel fit_centroid_model(const std::vector<PointCloud>& clouds, const RunConfig& config,
                                        double tau = 0.05) {
  config.validate();
  const auto scheme = config.label_scheme();
  CentroidFitter total(scheme);
  const std::size_t workers = resolve_workers(config.workers);
  for (std::size_t ci = 0; ci < clouds.size(); ++ci) {
    if (!clouds[ci].labeled()) throw ConfigError("fit: training cloud " + std::to_string(ci) + " is unlabeled");
    RunConfig c = config;
    c.seed = mix_seed(config.seed, ci);
    const PreparedCloud pc = prepare_cloud(clouds[ci], c);
    check_labels_for(pc, c);
    const auto poses = poses_for(pc, c, c.n_train_pairs);
    const ViewConfig vc = c.bound_view();
    // One fitter per view slot; integer sums make the merge order irrelevant.
    std::vector<CentroidFitter> partial(workers, CentroidFitter(scheme));
    parallel_for(
        workers, workers,
        [&](std::size_t w) {
          for (std::size_t k = w; k < poses.size(); k += workers) {
            const ViewRender v = render(pc.decimated(), pc.attributes, poses[k], vc, pc.radius);
            partial[w].add({v.rgb, v.composite, v.index_map, pc.decimated().labels});
          }
        },
        1);
    for (const auto& p : partial) total.merge(p);
  }
  return total.finish(tau);
}

/// cmd_views: renders and exports n_pairs views plus, for labeled clouds,
/// label_<id>.png ground-truth images. Returns the manifest entries.
inline std::vector<ExportedView> export_views(const PreparedCloud& pc, const RunConfig& config,
                                              std::size_t n_pairs, const std::string& dir) {
  namespace fs = std::filesystem;
  const auto poses = poses_for(pc, config, n_pairs);
  const ViewConfig vc = config.bound_view();
  std::vector<ExportedView> out(poses.size());
  fs::create_directories(dir);
  parallel_for(
      poses.size(), config.workers,
      [&](std::size_t k) {
        const ViewRender v = render(pc.decimated(), pc.attributes, poses[k], vc, pc.radius);
        out[k] = export_view(v, dir, static_cast<int>(k));
        if (pc.decimated().labeled()) {
          out[k].label_path = (fs::absolute(dir) / ("label_" + std::to_string(k) + ".png")).string();
          write_png(label_image(v.index_map, pc.decimated().labels), out[k].label_path);
        }
      },
      1);
  write_json_file(manifest_json(out), (fs::path(dir) / "manifest.json").string());
  return out;
}

struct SweepRow {
  std::size_t n_pairs = 0;
  double aiou = 0.0, accuracy = 0.0, coverage = 0.0;
  double elapsed_ms = 0.0;  // cumulative view loop time
  double backproject_ms = 0.0;
};

/// Accumulates views once and snapshots labels at every requested count.
/// Pose streams are prefix-stable, so row k uses exactly the first n_k views.
inline std::vector<SweepRow> sweep(const PreparedCloud& pc, const RunConfig& config,
                                   std::vector<std::size_t> counts) {
  check_labels_for(pc, config);
  if (!pc.original.labeled()) throw ConfigError("sweep requires a labeled input cloud");
  if (config.segmenter.kind == SegmenterKind::external) {
    throw ConfigError("sweep supports in-process segmenters only");
  }
  std::sort(counts.begin(), counts.end());
  counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
  if (counts.empty() || counts.front() < 1) throw ParameterError("sweep: bad pair counts");
  const auto scheme = config.label_scheme();
  const Segmenter seg = make_segmenter(config);
  const auto poses = poses_for(pc, config, counts.back());
  ScoreAccumulator acc(pc.decimated().size(), static_cast<int>(scheme.size()));
  std::vector<SweepRow> rows;
  std::size_t next = 0;
  Stopwatch sw;
  double paused = 0.0;
  accumulate_views(pc, config, seg, poses, acc, nullptr, [&](std::size_t done) {
    while (next < counts.size() && counts[next] == done) {
      Stopwatch bp;
      LabelResult r;
      r.accumulator = acc;
      finish_labels(pc, scheme, r);
      SweepRow row;
      row.n_pairs = done;
      row.aiou = r.report->aiou;
      row.accuracy = r.report->accuracy;
      row.coverage = r.decision.coverage;
      row.backproject_ms = bp.ms();
      paused += row.backproject_ms;
      row.elapsed_ms = sw.ms() - paused;
      rows.push_back(row);
      ++next;
    }
  });
  return rows;
}

}  // namespace mvlabel

#endif  // MVLABEL_PIPELINE_HPP
