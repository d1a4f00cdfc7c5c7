// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mvlabel/metrics.hpp"
#include "oracles.hpp"

using namespace mvlabel;

namespace {

LabelScheme scheme_of(std::size_t c) {
  std::vector<LabelClass> classes;
  for (std::size_t i = 0; i < c; ++i) classes.push_back({static_cast<ClassId>(i), "c" + std::to_string(i), {}});
  return LabelScheme(classes);
}

std::vector<ClassId> random_labels(std::mt19937_64& rng, std::size_t n, std::size_t c) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(c) - 1);
  std::vector<ClassId> out(n);
  for (auto& l : out) l = static_cast<ClassId>(d(rng));
  return out;
}

/// Predictions that mostly agree with gt, so IoU values are non-trivial.
std::vector<ClassId> noisy_copy(std::mt19937_64& rng, const std::vector<ClassId>& gt, std::size_t c, double flip) {
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> d(0, static_cast<int>(c) - 1);
  auto out = gt;
  for (auto& l : out)
    if (u(rng) < flip) l = static_cast<ClassId>(d(rng));
  return out;
}

}  // namespace

TEST(Evaluate, PerfectPrediction) {
  const std::vector<ClassId> gt = {0, 1, 2, 2, 1, 0, 0};
  const auto r = evaluate(gt, gt, scheme_of(3));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.aiou, 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.confusion[i][j] > 0, i == j);
  EXPECT_EQ(r.confusion[0][0], 3u);
}

TEST(Evaluate, HandComputedTwoClassCase) {
  const auto r = evaluate({0, 0, 1, 1}, {0, 1, 1, 1}, scheme_of(2));
  EXPECT_EQ(r.confusion, (std::vector<std::vector<std::uint64_t>>{{1, 1}, {0, 2}}));
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(r.iou[0], 0.5);
  EXPECT_DOUBLE_EQ(r.iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.aiou, 7.0 / 12.0);
  EXPECT_DOUBLE_EQ(r.confusion_normalized[0][1], 0.5);
  EXPECT_DOUBLE_EQ(r.confusion_normalized[1][1], 1.0);
}

TEST(Evaluate, AbsentClassesExcludedFromAiou) {
  // Class 2 never occurs in gt; a wrong prediction of it only lowers class 0.
  const auto r = evaluate({0, 0, 1}, {0, 2, 1}, scheme_of(3));
  EXPECT_FALSE(r.present[2]);
  EXPECT_EQ(r.iou[2], 0.0);
  for (double v : r.confusion_normalized[2]) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(r.aiou, (0.5 + 1.0) / 2.0);
}

TEST(Evaluate, MatchesBruteForceOracleExactly) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng() % 7;
    const std::size_t n = 1 + rng() % 300;
    const auto gt = random_labels(rng, n, c);
    const auto pred = trial % 2 ? random_labels(rng, n, c) : noisy_copy(rng, gt, c, 0.2);
    const auto r = evaluate(gt, pred, scheme_of(c));
    const auto want = oracle::confusion(gt, pred, c);
    ASSERT_EQ(r.confusion, want);
    const auto m = oracle::metrics(gt, pred, c);
    ASSERT_EQ(r.accuracy, m.accuracy);
    ASSERT_EQ(r.iou, m.iou);
    ASSERT_EQ(r.aiou, m.aiou);
    std::uint64_t total = 0;
    for (const auto& row : r.confusion) total = std::accumulate(row.begin(), row.end(), total);
    ASSERT_EQ(total, n);
  }
}

TEST(Evaluate, PermutationEquivariant) {
  std::mt19937_64 rng(7);
  const auto gt = random_labels(rng, 500, 5);
  const auto pred = noisy_copy(rng, gt, 5, 0.3);
  std::vector<std::size_t> order(gt.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ClassId> g2, p2;
  for (auto i : order) {
    g2.push_back(gt[i]);
    p2.push_back(pred[i]);
  }
  const auto a = evaluate(gt, pred, scheme_of(5)), b = evaluate(g2, p2, scheme_of(5));
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.aiou, b.aiou);
}

TEST(Evaluate, ClassRelabelingPermutesConfusion) {
  std::mt19937_64 rng(8);
  const auto gt = random_labels(rng, 800, 5);
  const auto pred = noisy_copy(rng, gt, 5, 0.3);
  const std::vector<ClassId> perm = {3, 0, 4, 1, 2};
  std::vector<ClassId> g2, p2;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    g2.push_back(perm[gt[i]]);
    p2.push_back(perm[pred[i]]);
  }
  const auto a = evaluate(gt, pred, scheme_of(5)), b = evaluate(g2, p2, scheme_of(5));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(a.confusion[i][j], b.confusion[perm[i]][perm[j]]);
    EXPECT_DOUBLE_EQ(a.iou[i], b.iou[perm[i]]);
  }
  EXPECT_DOUBLE_EQ(a.accuracy, b.accuracy);
  EXPECT_NEAR(a.aiou, b.aiou, 1e-15);
}

TEST(Evaluate, Errors) {
  EXPECT_THROW(evaluate({0, 1}, {0}, scheme_of(2)), ParameterError);
  EXPECT_THROW(evaluate({}, {}, scheme_of(2)), ParameterError);
  EXPECT_THROW(evaluate({0, 2}, {0, 1}, scheme_of(2)), ParameterError);
  EXPECT_THROW(evaluate({0, 1}, {0, 5}, scheme_of(2)), ParameterError);
}

TEST(Report, JsonSchemaAndRoundTrip) {
  std::mt19937_64 rng(3);
  const auto gt = random_labels(rng, 400, 5);
  const auto pred = noisy_copy(rng, gt, 5, 0.25);
  const auto scheme = LabelScheme::five_class();
  const auto r = evaluate(gt, pred, scheme);
  const auto path = (oracle::scratch_dir("report") / "r.json").string();
  render_report(r, path);
  const auto j = read_json_file(path);
  for (const char* key : {"accuracy", "aiou", "iou", "confusion", "confusion_normalized", "n_points"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_TRUE(j["iou"].contains("berries"));
  const auto back = report_from_json(j, scheme);
  EXPECT_EQ(back.confusion, r.confusion);
  EXPECT_EQ(back.n_points, r.n_points);
  EXPECT_EQ(back.class_names, r.class_names);
  EXPECT_EQ(back.present, r.present);
  EXPECT_NEAR(back.accuracy, r.accuracy, 1e-15);
  EXPECT_NEAR(back.aiou, r.aiou, 1e-15);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(back.iou[i], r.iou[i], 1e-15);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(back.confusion_normalized[i][k], r.confusion_normalized[i][k], 1e-15);
  }
}

TEST(Report, PerfectReportJson) {
  const auto r = evaluate({0, 1}, {0, 1}, scheme_of(2));
  const auto j = report_to_json(r);
  EXPECT_EQ(j["accuracy"].get<double>(), 1.0);
  EXPECT_EQ(j["aiou"].get<double>(), 1.0);
}

TEST(Report, FiveClassTextTables) {
  std::mt19937_64 rng(4);
  const auto gt = random_labels(rng, 300, 5);
  const auto r = evaluate(gt, noisy_copy(rng, gt, 5, 0.2), LabelScheme::five_class());
  const auto path = (oracle::scratch_dir("report_txt") / "r.json").string();
  render_report(r, path);
  std::ifstream is(path + ".txt");
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  EXPECT_EQ(text, format_confusion(r));
  EXPECT_NE(text.find("Absolute values"), std::string::npos);
  EXPECT_NE(text.find("Normalized values"), std::string::npos);

  std::istringstream lines(text);
  std::string line;
  int table = -1, rows = 0;
  std::vector<int> rows_per_table;
  while (std::getline(lines, line)) {
    if (line.rfind("Absolute", 0) == 0 || line.rfind("Normalized", 0) == 0) {
      if (table >= 0) rows_per_table.push_back(rows);
      ++table;
      rows = -1;  // header row follows
      continue;
    }
    if (line.empty() || table < 0) continue;
    if (line.rfind("accuracy", 0) == 0) continue;
    std::istringstream cells(line);
    std::vector<std::string> tok;
    for (std::string t; cells >> t;) tok.push_back(t);
    if (rows == -1) {
      EXPECT_EQ(tok, (std::vector<std::string>{"peduncle", "rachis", "berries", "twigs", "hook"}));
    } else {
      EXPECT_EQ(tok.size(), 6u) << line;
      EXPECT_EQ(tok[0], r.class_names[rows]);
    }
    ++rows;
  }
  rows_per_table.push_back(rows);
  EXPECT_EQ(rows_per_table, (std::vector<int>{5, 5}));
}
