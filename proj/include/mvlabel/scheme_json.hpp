// SPDX-License-Identifier: Apache-2.0

#ifndef MVLABEL_SCHEME_JSON_HPP
#define MVLABEL_SCHEME_JSON_HPP

#include <algorithm>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"

namespace mvlabel {

inline nlohmann::json scheme_to_json(const LabelScheme& scheme) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : scheme.classes()) {
    classes.push_back({{"id", c.id},
                       {"name", c.name},
                       {"color", {c.display_color.r, c.display_color.g, c.display_color.b}}});
  }
  return {{"classes", classes}};
}

inline LabelScheme scheme_from_json(const nlohmann::json& j) {
  try {
    std::vector<LabelClass> classes;
    for (const auto& c : j.at("classes")) {
      const auto& col = c.at("color");
      classes.push_back({c.at("id").get<ClassId>(), c.at("name").get<std::string>(),
                         {col.at(0).get<std::uint8_t>(), col.at(1).get<std::uint8_t>(),
                          col.at(2).get<std::uint8_t>()}});
    }
    std::sort(classes.begin(), classes.end(),
              [](const LabelClass& a, const LabelClass& b) { return a.id < b.id; });
    return LabelScheme(std::move(classes));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("label map: ") + e.what());
  }
}

/// "five" / "six" preset names, as accepted on the command line.
inline LabelScheme scheme_preset(const std::string& name) {
  if (name == "five" || name == "5") return LabelScheme::five_class();
  if (name == "six" || name == "6") return LabelScheme::six_class();
  throw ConfigError("unknown scheme preset: " + name + " (expected five or six)");
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace mvlabel

#endif  // MVLABEL_SCHEME_JSON_HPP
