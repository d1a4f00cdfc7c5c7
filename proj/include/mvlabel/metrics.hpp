// SPDX-License-Identifier: Apache-2.0
//
// Confusion matrix (rows = ground truth, columns = prediction), accuracy,
// per-class IoU and AIoU (mean IoU over classes present in ground truth).

#ifndef MVLABEL_METRICS_HPP
#define MVLABEL_METRICS_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"
#include "mvlabel/scheme_json.hpp"

namespace mvlabel {

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::uint64_t>> confusion;
  std::vector<std::vector<double>> confusion_normalized;
  double accuracy = 0.0;
  std::vector<double> iou;
  std::vector<bool> present;  // class occurs in ground truth
  double aiou = 0.0;
  std::uint64_t n_points = 0;

  std::size_t num_classes() const { return confusion.size(); }
};

inline EvalReport evaluate(const std::vector<ClassId>& gt, const std::vector<ClassId>& pred,
                           const LabelScheme& scheme) {
  if (gt.size() != pred.size()) {
    throw ParameterError("evaluate: length mismatch (" + std::to_string(gt.size()) + " vs " +
                         std::to_string(pred.size()) + ")");
  }
  if (gt.empty()) throw ParameterError("evaluate: no points");
  const std::size_t c = scheme.size();
  EvalReport r;
  for (const auto& cls : scheme.classes()) r.class_names.push_back(cls.name);
  r.confusion.assign(c, std::vector<std::uint64_t>(c, 0));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] >= c || pred[i] >= c) {
      throw ParameterError("evaluate: invalid class id at index " + std::to_string(i));
    }
    ++r.confusion[gt[i]][pred[i]];
  }
  r.n_points = gt.size();

  std::vector<std::uint64_t> row(c, 0), col(c, 0);
  std::uint64_t trace = 0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      row[i] += r.confusion[i][j];
      col[j] += r.confusion[i][j];
    }
    trace += r.confusion[i][i];
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(r.n_points);

  r.confusion_normalized.assign(c, std::vector<double>(c, 0.0));
  r.iou.assign(c, 0.0);
  r.present.assign(c, false);
  double iou_sum = 0.0;
  std::size_t n_present = 0;
  for (std::size_t i = 0; i < c; ++i) {
    if (row[i] > 0) {
      for (std::size_t j = 0; j < c; ++j) {
        r.confusion_normalized[i][j] =
            static_cast<double>(r.confusion[i][j]) / static_cast<double>(row[i]);
      }
    }
    const std::uint64_t denom = row[i] + col[i] - r.confusion[i][i];
    r.iou[i] = denom == 0 ? 0.0 : static_cast<double>(r.confusion[i][i]) / static_cast<double>(denom);
    r.present[i] = row[i] > 0;
    if (r.present[i]) {
      iou_sum += r.iou[i];
      ++n_present;
    }
  }
  r.aiou = iou_sum / static_cast<double>(n_present);
  return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json iou = nlohmann::json::object();
  for (std::size_t i = 0; i < r.num_classes(); ++i) iou[r.class_names[i]] = r.iou[i];
  return {{"accuracy", r.accuracy},
          {"aiou", r.aiou},
          {"iou", iou},
          {"confusion", r.confusion},
          {"confusion_normalized", r.confusion_normalized},
          {"n_points", r.n_points}};
}

/// Inverse of report_to_json; class order follows the confusion rows, so
/// the caller passes the scheme that produced the report.
inline EvalReport report_from_json(const nlohmann::json& j, const LabelScheme& scheme) {
  EvalReport r;
  for (const auto& c : scheme.classes()) r.class_names.push_back(c.name);
  r.accuracy = j.at("accuracy").get<double>();
  r.aiou = j.at("aiou").get<double>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::uint64_t>>>();
  r.confusion_normalized = j.at("confusion_normalized").get<std::vector<std::vector<double>>>();
  r.n_points = j.at("n_points").get<std::uint64_t>();
  for (const auto& name : r.class_names) r.iou.push_back(j.at("iou").at(name).get<double>());
  for (const auto& row : r.confusion) {
    std::uint64_t s = 0;
    for (auto v : row) s += v;
    r.present.push_back(s > 0);
  }
  return r;
}

/// Aligned text tables, absolute counts then row-normalized values.
inline std::string format_confusion(const EvalReport& r) {
  std::size_t w = 9;
  for (const auto& n : r.class_names) w = std::max(w, n.size() + 1);
  std::ostringstream os;
  auto header = [&](const char* title) {
    os << title << "\n";
    os << std::string(w, ' ');
    for (const auto& n : r.class_names) os << std::string(w - n.size(), ' ') << n;
    os << "\n";
  };
  char cell[64];
  header("Absolute values (rows: ground truth, columns: prediction)");
  for (std::size_t i = 0; i < r.num_classes(); ++i) {
    os << r.class_names[i] << std::string(w - r.class_names[i].size(), ' ');
    for (std::size_t j = 0; j < r.num_classes(); ++j) {
      std::snprintf(cell, sizeof cell, "%*llu", static_cast<int>(w),
                    static_cast<unsigned long long>(r.confusion[i][j]));
      os << cell;
    }
    os << "\n";
  }
  os << "\n";
  header("Normalized values");
  for (std::size_t i = 0; i < r.num_classes(); ++i) {
    os << r.class_names[i] << std::string(w - r.class_names[i].size(), ' ');
    for (std::size_t j = 0; j < r.num_classes(); ++j) {
      std::snprintf(cell, sizeof cell, "%*.3f", static_cast<int>(w), r.confusion_normalized[i][j]);
      os << cell;
    }
    os << "\n";
  }
  os << "\n";
  std::snprintf(cell, sizeof cell, "accuracy %.4f  AIoU %.4f  points %llu\n", r.accuracy, r.aiou,
                static_cast<unsigned long long>(r.n_points));
  os << cell;
  return os.str();
}

/// JSON at `path`, confusion tables at `path` + ".txt".
inline void render_report(const EvalReport& r, const std::string& path) {
  write_json_file(report_to_json(r), path);
  std::ofstream os(path + ".txt", std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path + ".txt");
  os << format_confusion(r);
  if (!os) throw IoError("write failed: " + path + ".txt");
}

}  // namespace mvlabel

#endif  // MVLABEL_METRICS_HPP
