// SPDX-License-Identifier: Apache-2.0
//
// Minimal owned image buffers plus PNG (libpng) and IDX1 index-map I/O.

#ifndef MVLABEL_IMAGE_HPP
#define MVLABEL_IMAGE_HPP

#include <png.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mvlabel/binary_io.hpp"
#include "mvlabel/error.hpp"

namespace mvlabel {

/// Row-major, channel-interleaved image.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * channels;
  }
  T* at(int x, int y) { return data.data() + offset(x, y); }
  const T* at(int x, int y) const { return data.data() + offset(x, y); }

  friend bool operator==(const Image&, const Image&) = default;
};

using RgbImage = Image<std::uint8_t>;     // channels == 3
using GrayImage = Image<std::uint8_t>;    // channels == 1
using IndexMap = Image<std::uint32_t>;    // channels == 1
using DepthMap = Image<float>;            // channels == 1

inline constexpr std::uint32_t kEmptyIndex = 0xFFFFFFFFu;

inline void write_png(const Image<std::uint8_t>& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3) throw ParameterError("write_png: 1 or 3 channels");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path + ": " + msg);
  }
}

/// Decodes to 1 or 3 channels depending on the stored color type.
inline Image<std::uint8_t> read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ParseError("cannot read PNG " + path + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image<std::uint8_t> img(static_cast<int>(image.width), static_cast<int>(image.height),
                          color ? 3 : 1);
  if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw ParseError("cannot decode PNG " + path + ": " + msg);
  }
  return img;
}

/// IDX1: magic, u32 width, u32 height, width*height u32 point ids, row-major.
inline void write_index_map(const IndexMap& map, const std::string& path) {
  auto os = binio::open_out(path);
  binio::put_magic(os, "IDX1");
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(map.width));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(map.height));
  os.write(reinterpret_cast<const char*>(map.data.data()),
           static_cast<std::streamsize>(map.data.size() * sizeof(std::uint32_t)));
  binio::finish(os, path);
}

inline IndexMap read_index_map(const std::string& path) {
  auto is = binio::open_in(path);
  binio::expect_magic(is, "IDX1", path);
  const auto w = binio::get<std::uint32_t>(is, path);
  const auto h = binio::get<std::uint32_t>(is, path);
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) {
    throw ParseError(path + ": implausible index map size");
  }
  IndexMap map(static_cast<int>(w), static_cast<int>(h), 1);
  const auto bytes = static_cast<std::streamsize>(map.data.size() * sizeof(std::uint32_t));
  if (!is.read(reinterpret_cast<char*>(map.data.data()), bytes)) {
    throw ParseError(path + ": truncated payload");
  }
  return map;
}

}  // namespace mvlabel

#endif  // MVLABEL_IMAGE_HPP
