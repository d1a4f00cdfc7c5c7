// SPDX-License-Identifier: Apache-2.0
//
// Little-endian helpers for the small binary side formats (IDX1, SCM1, CATT, ACC1).

#ifndef MVLABEL_BINARY_IO_HPP
#define MVLABEL_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "mvlabel/error.hpp"

namespace mvlabel::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, std::string_view what) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw ParseError(std::string(what) + ": truncated payload");
  }
  return value;
}

inline void put_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic, std::string_view what) {
  std::string buf(magic.size(), '\0');
  if (!is.read(buf.data(), static_cast<std::streamsize>(buf.size())) || buf != magic) {
    throw ParseError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

inline void finish(std::ostream& os, const std::string& path) {
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace mvlabel::binio

#endif  // MVLABEL_BINARY_IO_HPP
