// SPDX-License-Identifier: Apache-2.0
//
// PLY point cloud I/O (ascii and binary_little_endian).
//
// Written files always use vertex properties in the order
//   float x, y, z; uchar red, green, blue; [uchar label]
// and, when labeled, a sidecar "<path>.labels.json" with the class names.
// The reader accepts any extra scalar vertex properties and skips them.

#ifndef MVLABEL_PLY_HPP
#define MVLABEL_PLY_HPP

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"
#include "mvlabel/scheme_json.hpp"

namespace mvlabel {

namespace ply_detail {

enum class Scalar { i8, u8, i16, u16, i32, u32, f32, f64 };

inline bool parse_scalar(const std::string& s, Scalar& out) {
  static const std::pair<const char*, Scalar> table[] = {
      {"char", Scalar::i8},    {"int8", Scalar::i8},     {"uchar", Scalar::u8},
      {"uint8", Scalar::u8},   {"short", Scalar::i16},   {"int16", Scalar::i16},
      {"ushort", Scalar::u16}, {"uint16", Scalar::u16},  {"int", Scalar::i32},
      {"int32", Scalar::i32},  {"uint", Scalar::u32},    {"uint32", Scalar::u32},
      {"float", Scalar::f32},  {"float32", Scalar::f32}, {"double", Scalar::f64},
      {"float64", Scalar::f64}};
  for (const auto& [name, t] : table) {
    if (s == name) {
      out = t;
      return true;
    }
  }
  return false;
}

inline std::size_t scalar_size(Scalar t) {
  switch (t) {
    case Scalar::i8:
    case Scalar::u8: return 1;
    case Scalar::i16:
    case Scalar::u16: return 2;
    case Scalar::i32:
    case Scalar::u32:
    case Scalar::f32: return 4;
    case Scalar::f64: return 8;
  }
  return 0;
}

inline bool is_integer(Scalar t) { return t != Scalar::f32 && t != Scalar::f64; }

inline double decode(const unsigned char* p, Scalar t) {
  switch (t) {
    case Scalar::i8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case Scalar::u8: return *p;
    case Scalar::i16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::u16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::i32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::u32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::f32: { float v; std::memcpy(&v, p, 4); return v; }
    case Scalar::f64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

struct Property {
  std::string name;
  Scalar type;
  std::size_t offset = 0;  // within a binary record
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
  std::size_t stride = 0;
};

enum class Format { ascii, binary_le };

struct Header {
  Format format = Format::ascii;
  std::vector<Element> elements;
  std::size_t payload_offset = 0;
  std::size_t header_lines = 0;
};

[[noreturn]] inline void header_error(const std::string& path, std::size_t line,
                                      const std::string& msg) {
  throw ParseError(path + ": malformed header at line " + std::to_string(line) + ": " + msg);
}

inline Header parse_header(std::istream& is, const std::string& path) {
  Header h;
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "ply") header_error(path, 1, "missing \"ply\" magic");
  bool have_format = false;
  for (;;) {
    if (!next()) header_error(path, lineno, "unexpected end of file before end_header");
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii") h.format = Format::ascii;
      else if (fmt == "binary_little_endian") h.format = Format::binary_le;
      else header_error(path, lineno, "unsupported format \"" + fmt + "\"");
      have_format = true;
    } else if (kw == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0) header_error(path, lineno, "bad element declaration");
      e.count = static_cast<std::size_t>(count);
      h.elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (h.elements.empty()) header_error(path, lineno, "property before any element");
      std::string type, name;
      ls >> type;
      if (type == "list") {
        header_error(path, lineno, "unsupported property type: list properties are not read");
      }
      ls >> name;
      Property p;
      if (!parse_scalar(type, p.type)) {
        header_error(path, lineno, "unsupported property type \"" + type + "\"");
      }
      if (name.empty()) header_error(path, lineno, "property without name");
      p.name = name;
      auto& e = h.elements.back();
      p.offset = e.stride;
      e.stride += scalar_size(p.type);
      e.props.push_back(std::move(p));
    } else if (kw == "end_header") {
      break;
    } else {
      header_error(path, lineno, "unknown keyword \"" + kw + "\"");
    }
  }
  if (!have_format) header_error(path, lineno, "missing format line");
  h.payload_offset = static_cast<std::size_t>(is.tellg());
  h.header_lines = lineno;
  return h;
}

inline std::string sidecar_path(const std::string& path) { return path + ".labels.json"; }

}  // namespace ply_detail

/// Reads a PLY point cloud. Missing colors default to (128,128,128); a
/// "label" property yields a labeled cloud. A sidecar label map, if present,
/// is attached as the cloud's scheme.
inline PointCloud read_ply(const std::string& path) {
  using namespace ply_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  Header h = parse_header(is, path);

  const Element* vertex = nullptr;
  std::size_t skip_bytes = 0, skip_lines = 0;
  for (const auto& e : h.elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
    skip_bytes += e.count * e.stride;
    skip_lines += e.count;
  }
  if (!vertex) throw ParseError(path + ": malformed header: no vertex element");

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, il = -1;
  for (std::size_t i = 0; i < vertex->props.size(); ++i) {
    const auto& p = vertex->props[i];
    const int idx = static_cast<int>(i);
    auto need = [&](bool ok, const char* what) {
      if (!ok) {
        throw ParseError(path + ": unsupported property type for \"" + p.name + "\" (expected " +
                         what + ")");
      }
    };
    if (p.name == "x" || p.name == "y" || p.name == "z") {
      need(!is_integer(p.type), "float");
      (p.name == "x" ? ix : p.name == "y" ? iy : iz) = idx;
    } else if (p.name == "red" || p.name == "green" || p.name == "blue") {
      need(p.type == Scalar::u8, "uchar");
      (p.name == "red" ? ir : p.name == "green" ? ig : ib) = idx;
    } else if (p.name == "label") {
      need(is_integer(p.type), "uchar or int");
      il = idx;
    }
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError(path + ": malformed header: vertex lacks x,y,z");
  const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
  const bool has_label = il >= 0;

  PointCloud cloud;
  const std::size_t n = vertex->count;
  cloud.reserve(n, has_label);

  std::vector<double> vals(vertex->props.size());
  auto emit = [&](std::size_t i) {
    Vec3f pos(static_cast<float>(vals[ix]), static_cast<float>(vals[iy]),
              static_cast<float>(vals[iz]));
    if (!pos.allFinite()) {
      throw ParseError(path + ": non-finite position at vertex " + std::to_string(i));
    }
    cloud.positions.push_back(pos);
    if (has_color) {
      cloud.colors.push_back({static_cast<std::uint8_t>(vals[ir]), static_cast<std::uint8_t>(vals[ig]),
                              static_cast<std::uint8_t>(vals[ib])});
    } else {
      cloud.colors.push_back({128, 128, 128});
    }
    if (has_label) {
      const double l = vals[il];
      if (l < 0 || l > 255) {
        throw ParseError(path + ": label out of range at vertex " + std::to_string(i));
      }
      cloud.labels.push_back(static_cast<ClassId>(l));
    }
  };

  if (h.format == Format::binary_le) {
    is.seekg(static_cast<std::streamoff>(h.payload_offset + skip_bytes));
    std::vector<unsigned char> buf(vertex->stride * n);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(is.gcount());
    if (got < buf.size()) {
      throw ParseError(path + ": truncated payload: expected " + std::to_string(n) +
                       " vertices, data ends at byte offset " +
                       std::to_string(h.payload_offset + skip_bytes + got) + " (vertex " +
                       std::to_string(got / vertex->stride) + ")");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned char* rec = buf.data() + i * vertex->stride;
      for (std::size_t k = 0; k < vals.size(); ++k) {
        vals[k] = decode(rec + vertex->props[k].offset, vertex->props[k].type);
      }
      emit(i);
    }
  } else {
    std::string line;
    std::size_t lineno = h.header_lines;
    auto next_data_line = [&]() -> bool {
      while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
      }
      return false;
    };
    for (std::size_t s = 0; s < skip_lines; ++s) {
      if (!next_data_line()) throw ParseError(path + ": truncated payload at line " + std::to_string(lineno));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!next_data_line()) {
        throw ParseError(path + ": truncated payload: expected " + std::to_string(n) +
                         " vertices, found " + std::to_string(i) + " (line " +
                         std::to_string(lineno) + ")");
      }
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (std::size_t k = 0; k < vals.size(); ++k) {
        while (p < end && (*p == ' ' || *p == '\t')) ++p;
        auto [q, ec] = std::from_chars(p, end, vals[k]);
        if (ec != std::errc()) {
          throw ParseError(path + ": bad value at line " + std::to_string(lineno) + ", field " +
                           std::to_string(k + 1));
        }
        p = q;
      }
      emit(i);
    }
  }

  if (std::filesystem::exists(sidecar_path(path))) {
    cloud.scheme = scheme_from_json(read_json_file(sidecar_path(path)));
  }
  try {
    cloud.validate();
  } catch (const ParameterError& e) {
    throw ParseError(path + ": " + e.what());
  }
  return cloud;
}

/// Writes x,y,z,red,green,blue[,label]. Labeled clouds also get the sidecar
/// label map (the attached scheme, or generic class names if none).
inline void write_ply(const PointCloud& cloud, const std::string& path, bool binary) {
  cloud.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "ply\n"
     << "format " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
     << "element vertex " << cloud.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.labeled()) os << "property uchar label\n";
  os << "end_header\n";
  if (binary) {
    const std::size_t stride = 15 + (cloud.labeled() ? 1 : 0);
    std::vector<char> buf(stride * cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      char* rec = buf.data() + i * stride;
      std::memcpy(rec, cloud.positions[i].data(), 12);
      rec[12] = static_cast<char>(cloud.colors[i].r);
      rec[13] = static_cast<char>(cloud.colors[i].g);
      rec[14] = static_cast<char>(cloud.colors[i].b);
      if (cloud.labeled()) rec[15] = static_cast<char>(cloud.labels[i]);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  } else {
    char line[160];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.positions[i];
      const auto& c = cloud.colors[i];
      int len = std::snprintf(line, sizeof line, "%.9g %.9g %.9g %u %u %u", p.x(), p.y(), p.z(),
                              c.r, c.g, c.b);
      os.write(line, len);
      if (cloud.labeled()) os << ' ' << static_cast<unsigned>(cloud.labels[i]);
      os << '\n';
    }
  }
  os.flush();
  if (!os) throw IoError("write failed: " + path);

  const auto sidecar = ply_detail::sidecar_path(path);
  if (cloud.labeled()) {
    LabelScheme scheme;
    if (cloud.scheme) {
      scheme = *cloud.scheme;
    } else {
      std::size_t max_id = 1;
      for (auto l : cloud.labels) max_id = std::max<std::size_t>(max_id, l);
      std::vector<LabelClass> classes;
      for (std::size_t i = 0; i <= max_id; ++i) {
        classes.push_back({static_cast<ClassId>(i), "class_" + std::to_string(i), {128, 128, 128}});
      }
      scheme = LabelScheme(std::move(classes));
    }
    write_json_file(scheme_to_json(scheme), sidecar);
  } else {
    std::error_code ec;
    std::filesystem::remove(sidecar, ec);
  }
}

}  // namespace mvlabel

#endif  // MVLABEL_PLY_HPP
