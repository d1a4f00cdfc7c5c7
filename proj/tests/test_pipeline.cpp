// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mvlabel/pipeline.hpp"
#include "mvlabel/ply.hpp"
#include "mvlabel/synth.hpp"
#include "oracles.hpp"

using namespace mvlabel;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
};

/// Runs the CLI with `args`, capturing stdout and stderr together.
Run cli(const std::string& args) {
  const std::string cmd = std::string(shell_quote(MVLABEL_CLI_PATH)) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, "popen failed"};
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return shell_quote(p.string()); }

BunchParams small_params(std::uint64_t seed) {
  BunchParams bp;
  bp.seed = seed;
  bp.target_radius = 40.0;
  bp.n_twigs = 6;
  return bp;
}

/// Small labeled bunch written once per test binary.
const fs::path& small_ply() {
  static const fs::path path = [] {
    const auto dir = oracle::scratch_dir("pipeline_input");
    const auto p = dir / "bunch.ply";
    write_ply(generate_bunch(small_params(1)), p.string(), true);
    return p;
  }();
  return path;
}

fs::path small_config(const fs::path& dir, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = {{"workers", 1}, {"n_test_pairs", 60}, {"n_train_pairs", 60}};
  j.update(extra);
  const auto p = dir / "config.json";
  write_json_file(j, p.string());
  return p;
}

}  // namespace

TEST(Cli, SynthWritesLabeledCloud) {
  const auto dir = oracle::scratch_dir("cli_synth");
  const auto r = cli("--seed 3 synth --out " + q(dir / "b.ply") + " --radius 40 --twigs 4");
  ASSERT_EQ(r.code, 0) << r.out;
  const PointCloud c = read_ply((dir / "b.ply").string());
  EXPECT_TRUE(c.labeled());
  ASSERT_TRUE(c.scheme.has_value());
  EXPECT_EQ(*c.scheme, LabelScheme::five_class());
  BunchParams bp = small_params(3);
  bp.n_twigs = 4;
  EXPECT_EQ(c.positions, generate_bunch(bp).positions);

  const auto six = cli("--scheme six synth --out " + q(dir / "s.ply") + " --radius 40 --twigs 4 --ascii");
  ASSERT_EQ(six.code, 0) << six.out;
  EXPECT_EQ(*read_ply((dir / "s.ply").string()).scheme, LabelScheme::six_class());
}

TEST(Cli, LabelIsByteDeterministic) {
  const auto dir = oracle::scratch_dir("cli_det");
  const auto cfg = small_config(dir);
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    const auto r = cli("--config " + q(cfg) + " label --in " + q(small_ply()) + " --out " + q(dir / (t + ".ply")) +
                       " --report " + q(dir / (t + ".json")) + " --dump-acc " + q(dir / (t + ".acc")));
    ASSERT_EQ(r.code, 0) << r.out;
  }
  EXPECT_EQ(slurp(dir / "a.ply"), slurp(dir / "b.ply"));
  EXPECT_EQ(slurp(dir / "a.ply.labels.json"), slurp(dir / "b.ply.labels.json"));
  EXPECT_EQ(slurp(dir / "a.acc"), slurp(dir / "b.acc"));
  auto ja = read_json_file((dir / "a.json").string()), jb = read_json_file((dir / "b.json").string());
  EXPECT_TRUE(ja.contains("timing_ms"));
  for (const char* stage : {"decimate", "features", "render", "segment", "backproject"}) {
    EXPECT_TRUE(ja["timing_ms"].contains(stage)) << stage;
  }
  ja.erase("timing_ms");
  jb.erase("timing_ms");
  EXPECT_EQ(ja.dump(), jb.dump());
  EXPECT_EQ(ja["n_views"].get<int>(), 60);
  EXPECT_GT(ja["eval"]["accuracy"].get<double>(), 0.9);
}

TEST(Cli, WorkerCountDoesNotChangeResults) {
  const PointCloud input = read_ply(small_ply().string());
  RunConfig a;
  a.n_test_pairs = 40;
  a.workers = 1;
  RunConfig b = a;
  b.workers = 3;
  const auto ra = label_cloud(input, a), rb = label_cloud(input, b);
  EXPECT_EQ(ra.accumulator, rb.accumulator);
  EXPECT_EQ(ra.labeled, rb.labeled);
}

TEST(Cli, OracleOnUnlabeledInputFails) {
  const auto dir = oracle::scratch_dir("cli_unlabeled");
  PointCloud c = read_ply(small_ply().string());
  c.labels.clear();
  c.scheme.reset();
  write_ply(c, (dir / "u.ply").string(), true);
  const auto r = cli("--workers 1 label --in " + q(dir / "u.ply") + " --out " + q(dir / "o.ply") + " --pairs 9");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("oracle segmenter requires a labeled input cloud"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(dir / "o.ply"));
}

TEST(Cli, LabelOutsideSchemeFails) {
  const auto dir = oracle::scratch_dir("cli_badlabel");
  PointCloud c = read_ply(small_ply().string());
  c.labels[0] = 5;
  c.scheme = LabelScheme::six_class();
  write_ply(c, (dir / "x.ply").string(), true);
  const auto r = cli("--workers 1 label --in " + q(dir / "x.ply") + " --out " + q(dir / "o.ply") + " --pairs 9");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("not in five-class scheme"), std::string::npos) << r.out;
}

TEST(Cli, BadConfigFails) {
  const auto dir = oracle::scratch_dir("cli_badcfg");
  write_json_file({{"voxel_size", -1.0}}, (dir / "c.json").string());
  auto r = cli("--config " + q(dir / "c.json") + " label --in " + q(small_ply()) + " --out " + q(dir / "o.ply"));
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("voxel_size"), std::string::npos) << r.out;
  write_json_file({{"segmenter", {{"kind", "oracle"}, {"command", "x"}}}}, (dir / "d.json").string());
  r = cli("--config " + q(dir / "d.json") + " label --in " + q(small_ply()) + " --out " + q(dir / "o.ply"));
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST(Cli, ExternalStubMatchesOracle) {
  const auto dir = oracle::scratch_dir("cli_external");
  RunConfig config;
  config.workers = 1;
  config.n_test_pairs = 45;
  const PreparedCloud pc = prepare_cloud(read_ply(small_ply().string()), config);
  const auto poses = poses_for(pc, config, config.n_test_pairs);
  const ViewConfig vc = config.bound_view();
  fs::create_directories(dir / "fixtures");
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const auto v = render(pc.decimated(), pc.attributes, poses[k], vc, pc.radius);
    write_score_map(segment_oracle(v.index_map, &pc.decimated().labels, 5),
                    (dir / "fixtures" / ("score_" + std::to_string(k) + ".scm")).string());
  }
  // The stub sees an unlabeled cloud's views only; scores come from fixtures.
  PointCloud unlabeled = pc.original;
  unlabeled.labels.clear();
  unlabeled.scheme.reset();
  write_ply(unlabeled, (dir / "u.ply").string(), true);
  const std::string stub = "sh -c 'test -f \"$1\" && cp " + (dir / "fixtures").string() + "/*.scm \"$2\"/' sh";
  auto r = cli("--workers 1 label --in " + q(dir / "u.ply") + " --out " + q(dir / "ext.ply") +
               " --pairs 45 --segmenter external --command " + shell_quote(stub) + " --work-dir " + q(dir / "work"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto manifest = read_json_file((dir / "work" / "manifest.json").string());
  EXPECT_EQ(manifest["num_classes"].get<int>(), 5);
  EXPECT_EQ(manifest["views"].size(), 45u);

  r = cli("--workers 1 label --in " + q(small_ply()) + " --out " + q(dir / "oracle.ply") + " --pairs 45");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(read_ply((dir / "ext.ply").string()).labels, read_ply((dir / "oracle.ply").string()).labels);

  r = cli("--workers 1 label --in " + q(dir / "u.ply") + " --out " + q(dir / "fail.ply") +
          " --pairs 3 --segmenter external --command " + shell_quote("sh -c 'exit 7' sh") + " --work-dir " +
          q(dir / "work2"));
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("[views+segment]"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("exit 7"), std::string::npos) << r.out;
}

TEST(Cli, ViewsExportsManifestAndLabelImages) {
  const auto dir = oracle::scratch_dir("cli_views");
  const auto r = cli("--workers 1 views --in " + q(small_ply()) + " --out " + q(dir / "v") + " --pairs 9");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto manifest = read_json_file((dir / "v" / "manifest.json").string());
  ASSERT_TRUE(manifest.is_array());
  ASSERT_EQ(manifest.size(), 9u);
  for (const auto& v : manifest) {
    for (const char* key : {"rgb_path", "comp_path", "idx_path", "label_path"}) {
      EXPECT_TRUE(fs::exists(v[key].get<std::string>())) << key;
    }
    const auto idx = read_index_map(v["idx_path"].get<std::string>());
    const auto lab = read_png(v["label_path"].get<std::string>());
    ASSERT_EQ(lab.channels, 1);
    for (std::size_t p = 0; p < idx.data.size(); ++p) {
      ASSERT_EQ(idx.data[p] == kEmptyIndex, lab.data[p] == 255);
      ASSERT_TRUE(lab.data[p] < 5 || lab.data[p] == 255);
    }
  }
}

TEST(Cli, EvalAndColorize) {
  const auto dir = oracle::scratch_dir("cli_eval");
  auto r = cli("eval --gt " + q(small_ply()) + " --pred " + q(small_ply()) + " --report " + q(dir / "r.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(read_json_file((dir / "r.json").string())["accuracy"].get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(dir / "r.json.txt"));
  EXPECT_NE(r.out.find("Normalized values"), std::string::npos);

  r = cli("colorize --in " + q(small_ply()) + " --out " + q(dir / "c.ply"));
  ASSERT_EQ(r.code, 0) << r.out;
  const PointCloud c = read_ply((dir / "c.ply").string());
  const LabelScheme s = LabelScheme::five_class();
  for (std::size_t i = 0; i < c.size(); ++i) ASSERT_EQ(c.colors[i], s[c.labels[i]].display_color);

  PointCloud u = c;
  u.labels.clear();
  u.scheme.reset();
  write_ply(u, (dir / "u.ply").string(), true);
  r = cli("eval --gt " + q(small_ply()) + " --pred " + q(dir / "u.ply"));
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST(Cli, SweepTable) {
  const auto dir = oracle::scratch_dir("cli_sweep");
  const auto r = cli("--workers 1 sweep --in " + q(small_ply()) + " --pairs 3 30 60 --out " + q(dir / "s.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("AIoU"), std::string::npos);
  const auto j = read_json_file((dir / "s.json").string());
  ASSERT_EQ(j.size(), 3u);
  double prev = 0;
  for (const auto& row : j) {
    EXPECT_GE(row["coverage"].get<double>(), prev);
    prev = row["coverage"].get<double>();
  }
  EXPECT_EQ(j[2]["n_pairs"].get<int>(), 60);

  // Row k equals a standalone run on the first n_k views.
  RunConfig config;
  config.workers = 1;
  const PreparedCloud pc = prepare_cloud(read_ply(small_ply().string()), config);
  const auto single = label_prepared(pc, config, 30);
  EXPECT_DOUBLE_EQ(j[1]["aiou"].get<double>(), single.report->aiou);
  EXPECT_DOUBLE_EQ(j[1]["coverage"].get<double>(), single.decision.coverage);
}

TEST(Cli, FitThenLabelWithCentroids) {
  const auto dir = oracle::scratch_dir("cli_fit");
  write_ply(generate_bunch(small_params(5)), (dir / "t1.ply").string(), true);
  write_ply(generate_bunch(small_params(6)), (dir / "t2.ply").string(), true);
  const auto cfg = small_config(dir);
  auto r = cli("--config " + q(cfg) + " fit " + q(dir / "t1.ply") + " " + q(dir / "t2.ply") + " --out " +
               q(dir / "m.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const CentroidModel m = CentroidModel::load((dir / "m.json").string());
  EXPECT_EQ(m.num_classes(), 5);

  RunConfig config = RunConfig::from_json(read_json_file(cfg.string()));
  const std::vector<PointCloud> clouds = {read_ply((dir / "t1.ply").string()), read_ply((dir / "t2.ply").string())};
  EXPECT_EQ(fit_centroid_model(clouds, config), m);

  r = cli("--config " + q(cfg) + " label --in " + q(small_ply()) + " --out " + q(dir / "o.ply") +
          " --segmenter centroid --model " + q(dir / "m.json") + " --report " + q(dir / "rep.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_GT(read_json_file((dir / "rep.json").string())["eval"]["accuracy"].get<double>(), 0.8);

  r = cli("--config " + q(cfg) + " label --in " + q(small_ply()) + " --out " + q(dir / "o.ply") +
          " --segmenter centroid");
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST(RunConfig, JsonRoundTripAndDefaults) {
  RunConfig c;
  c.voxel_size = 0.5;
  c.view.distances = {10, 30};
  c.seed = 77;
  c.scheme = "six";
  c.segmenter.kind = SegmenterKind::centroid;
  c.segmenter.model_path = "m.json";
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  const RunConfig d = RunConfig::from_json(nlohmann::json::object());
  EXPECT_EQ(d.to_json(), RunConfig{}.to_json());
  EXPECT_EQ(d.n_train_pairs, 1800u);
  EXPECT_EQ(d.n_test_pairs, 1500u);
  EXPECT_THROW(RunConfig::from_json({{"scheme", "seven"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"n_test_pairs", "many"}}), ConfigError);
}
