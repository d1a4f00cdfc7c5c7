// SPDX-License-Identifier: Apache-2.0
//
// mvlabel command line: synth | fit | views | label | eval | colorize | sweep

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvlabel/pipeline.hpp"
#include "mvlabel/ply.hpp"
#include "mvlabel/synth.hpp"

namespace {

using namespace mvlabel;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> scheme;
};

RunConfig load_config(const GlobalOptions& g) {
  RunConfig c;
  if (!g.config_path.empty()) c = RunConfig::from_json(read_json_file(g.config_path));
  if (g.seed) c.seed = *g.seed;
  if (g.workers) c.workers = *g.workers;
  if (g.scheme) c.scheme = *g.scheme;
  c.validate();
  return c;
}

/// Attach the run's scheme when the file carried no sidecar.
PointCloud load_cloud(const std::string& path, const RunConfig& config) {
  PointCloud cloud = read_ply(path);
  if (cloud.labeled() && !cloud.scheme) cloud.scheme = config.label_scheme();
  return cloud;
}

void print_times(const StageTimes& t) {
  std::printf("timing (ms):");
  for (const auto& [stage, ms] : t.ms) std::printf("  %s %.1f", stage.c_str(), ms);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view semantic labeling of point clouds"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--workers", g.workers, "Worker threads (0 = all cores)");
  app.add_option("--scheme", g.scheme, "Label scheme")->check(CLI::IsMember({"five", "six"}));
  app.fallthrough();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic grape bunch");
  std::string synth_out;
  BunchParams bunch;
  bool no_berries = false, hard_mode = false, ascii = false;
  synth->add_option("--out", synth_out, "Output PLY")->required();
  synth->add_option("--radius", bunch.target_radius, "Target bunch radius (mm)");
  synth->add_option("--twigs", bunch.n_twigs, "Number of twigs");
  synth->add_option("--spacing", bunch.sample_spacing, "Surface sample spacing (mm)");
  synth->add_option("--color-noise", bunch.color_noise, "Per-channel color noise std on [0,1]");
  synth->add_flag("--no-berries", no_berries, "Omit berries");
  synth->add_flag("--hard", hard_mode, "Shared stem colors");
  synth->add_flag("--ascii", ascii, "Write ASCII PLY");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the centroid baseline on labeled clouds");
  std::vector<std::string> fit_inputs;
  std::string fit_out;
  double tau = 0.05;
  fit->add_option("inputs", fit_inputs, "Labeled training PLYs")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fit_out, "Output model JSON")->required();
  fit->add_option("--tau", tau, "Kernel width");

  // views
  auto* views = app.add_subcommand("views", "Export renders and a manifest for external segmenters");
  std::string views_in, views_dir;
  std::optional<std::size_t> views_pairs;
  views->add_option("--in", views_in, "Input PLY")->required()->check(CLI::ExistingFile);
  views->add_option("--out", views_dir, "Output directory")->required();
  views->add_option("--pairs", views_pairs, "Number of image pairs (default n_test_pairs)");

  // label
  auto* label = app.add_subcommand("label", "Label a point cloud end to end");
  std::string label_in, label_out, label_report, work_dir, dump_acc, dump_attrs, segmenter_kind,
      model_path, command;
  std::optional<std::size_t> label_pairs;
  bool label_ascii = false;
  label->add_option("--in", label_in, "Input PLY")->required()->check(CLI::ExistingFile);
  label->add_option("--out", label_out, "Labeled output PLY")->required();
  label->add_option("--report", label_report, "JSON run report (eval, coverage, timing)");
  label->add_option("--pairs", label_pairs, "Number of image pairs (default n_test_pairs)");
  label->add_option("--segmenter", segmenter_kind, "oracle | centroid | external")
      ->check(CLI::IsMember({"oracle", "centroid", "external"}));
  label->add_option("--model", model_path, "Centroid model JSON");
  label->add_option("--command", command, "External segmenter command");
  label->add_option("--work-dir", work_dir, "Working directory for the external protocol");
  label->add_option("--dump-acc", dump_acc, "Write the ACC1 accumulator dump");
  label->add_option("--dump-attrs", dump_attrs, "Write the CATT attribute dump");
  label->add_flag("--ascii", label_ascii, "Write ASCII PLY");

  // eval
  auto* eval = app.add_subcommand("eval", "Compare a predicted labeled PLY against ground truth");
  std::string eval_gt, eval_pred, eval_report;
  eval->add_option("--gt", eval_gt, "Ground-truth PLY")->required()->check(CLI::ExistingFile);
  eval->add_option("--pred", eval_pred, "Predicted PLY")->required()->check(CLI::ExistingFile);
  eval->add_option("--report", eval_report, "Report JSON (plus .txt tables)");

  // colorize
  auto* colorize = app.add_subcommand("colorize", "Replace colors by the scheme's class colors");
  std::string col_in, col_out;
  colorize->add_option("--in", col_in, "Labeled PLY")->required()->check(CLI::ExistingFile);
  colorize->add_option("--out", col_out, "Output PLY")->required();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "AIoU/accuracy/runtime over image pair counts");
  std::string sweep_in, sweep_out;
  std::vector<std::size_t> sweep_pairs;
  sweep_cmd->add_option("--in", sweep_in, "Labeled PLY")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--pairs", sweep_pairs, "Pair counts (default config sweep_pairs)");
  sweep_cmd->add_option("--out", sweep_out, "Table as JSON");
  sweep_cmd->add_option("--segmenter", segmenter_kind, "oracle | centroid")
      ->check(CLI::IsMember({"oracle", "centroid"}));
  sweep_cmd->add_option("--model", model_path, "Centroid model JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config = load_config(g);
    if (!segmenter_kind.empty()) {
      SegmenterSpec spec;
      spec.kind = segmenter_kind == "oracle"     ? SegmenterKind::oracle
                  : segmenter_kind == "centroid" ? SegmenterKind::centroid
                                                 : SegmenterKind::external;
      spec.model_path = model_path;
      spec.command = command;
      spec.validate();
      config.segmenter = spec;
    }

    if (*synth) {
      bunch.seed = config.seed;
      bunch.with_berries = !no_berries;
      bunch.six_class = config.scheme == "six";
      if (hard_mode) bunch.colors = BunchColors::hard_mode();
      const PointCloud cloud = generate_bunch(bunch);
      write_ply(cloud, synth_out, !ascii);
      std::printf("wrote %zu points, bounding radius %.2f mm\n", cloud.size(), bounding_radius(cloud));
    } else if (*fit) {
      std::vector<PointCloud> clouds;
      for (const auto& p : fit_inputs) clouds.push_back(load_cloud(p, config));
      const CentroidModel model = fit_centroid_model(clouds, config, tau);
      model.save(fit_out);
      std::printf("fitted %d centroids over %zu clouds x %zu pairs\n", model.num_classes(), clouds.size(),
                  config.n_train_pairs);
    } else if (*views) {
      const PreparedCloud pc = prepare_cloud(load_cloud(views_in, config), config);
      const auto out = export_views(pc, config, views_pairs.value_or(config.n_test_pairs), views_dir);
      std::printf("exported %zu views to %s\n", out.size(), views_dir.c_str());
    } else if (*label) {
      if (label_pairs) config.n_test_pairs = *label_pairs;
      StageTimes prep;
      PointCloud input = load_cloud(label_in, config);
      {
        PreparedCloud probe;
        probe.original = input;
        check_labels_for(probe, config);
      }
      const PreparedCloud pc =
          in_stage("preprocess", [&] { return prepare_cloud(std::move(input), config, &prep); });
      if (!dump_attrs.empty()) write_attributes(pc.attributes, dump_attrs);
      if (work_dir.empty() && config.segmenter.kind == SegmenterKind::external && config.segmenter.dir.empty()) {
        work_dir = label_out + ".work";
      }
      LabelResult r = label_prepared(pc, config, config.n_test_pairs, work_dir);
      for (const auto& [k, v] : prep.ms) r.times.add(k, v);
      write_ply(r.labeled, label_out, !label_ascii);
      if (!dump_acc.empty()) write_accumulator(r.accumulator, dump_acc);
      if (!label_report.empty()) write_json_file(label_summary(r), label_report);
      std::printf("views %zu  decimated %zu  coverage %.4f  fallback %zu\n", r.n_views, pc.decimated().size(),
                  r.decision.coverage, r.decision.filled);
      print_times(r.times);
      if (r.report) std::printf("%s", format_confusion(*r.report).c_str());
    } else if (*eval) {
      const PointCloud gt = load_cloud(eval_gt, config);
      const PointCloud pred = load_cloud(eval_pred, config);
      if (!gt.labeled() || !pred.labeled()) throw ConfigError("eval: both clouds must be labeled");
      const LabelScheme scheme = gt.scheme.value_or(config.label_scheme());
      const EvalReport report = evaluate(gt.labels, pred.labels, scheme);
      if (!eval_report.empty()) render_report(report, eval_report);
      std::printf("%s", format_confusion(report).c_str());
    } else if (*colorize) {
      PointCloud cloud = load_cloud(col_in, config);
      if (!cloud.labeled()) throw ConfigError("colorize: input is unlabeled");
      const LabelScheme scheme = *cloud.scheme;
      for (std::size_t i = 0; i < cloud.size(); ++i) cloud.colors[i] = scheme[cloud.labels[i]].display_color;
      write_ply(cloud, col_out, true);
    } else if (*sweep_cmd) {
      const PreparedCloud pc = prepare_cloud(load_cloud(sweep_in, config), config);
      const auto rows = sweep(pc, config, sweep_pairs.empty() ? config.sweep_pairs : sweep_pairs);
      std::printf("%-22s", "Number of Image Pairs");
      for (const auto& r : rows) std::printf("%10zu", r.n_pairs);
      std::printf("\n%-22s", "AIoU");
      for (const auto& r : rows) std::printf("%10.3f", r.aiou);
      std::printf("\n%-22s", "Accuracy");
      for (const auto& r : rows) std::printf("%10.3f", r.accuracy);
      std::printf("\n%-22s", "Coverage");
      for (const auto& r : rows) std::printf("%10.3f", r.coverage);
      std::printf("\n%-22s", "Views+segment (s)");
      for (const auto& r : rows) std::printf("%10.2f", r.elapsed_ms / 1000.0);
      std::printf("\n%-22s", "Backprojection (s)");
      for (const auto& r : rows) std::printf("%10.2f", r.backproject_ms / 1000.0);
      std::printf("\n");
      if (!sweep_out.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : rows) {
          j.push_back({{"n_pairs", r.n_pairs},
                       {"aiou", r.aiou},
                       {"accuracy", r.accuracy},
                       {"coverage", r.coverage},
                       {"views_ms", r.elapsed_ms},
                       {"backproject_ms", r.backproject_ms}});
        }
        write_json_file(j, sweep_out);
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
