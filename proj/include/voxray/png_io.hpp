// Thin libpng wrappers for the three image kinds the dataset format needs:
// 8-bit RGB, 8-bit grayscale (segmentation ids), 16-bit grayscale (quantized
// depth). Compression settings are fixed so output bytes are reproducible.

#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"
#include "math.hpp"

namespace voxray {

struct png_error : std::runtime_error {
  explicit png_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

struct file_closer {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using unique_file = std::unique_ptr<std::FILE, file_closer>;

inline unique_file open_file(const std::string& path, const char* mode) {
  unique_file f(std::fopen(path.c_str(), mode));
  if (!f) throw png_error("cannot open " + path);
  return f;
}

template <typename RowFiller>
void write_png(const std::string& path, int width, int height, int bit_depth, int color_type,
               RowFiller&& fill_row) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw png_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw png_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw png_error("libpng failure writing " + path);
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  std::vector<png_byte> row(size_t(width) * channels * (bit_depth / 8));
  for (int y = 0; y < height; y++) {
    fill_row(y, row.data());
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

struct png_reader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  unique_file file;
  int width = 0, height = 0, bit_depth = 0, color_type = 0;

  explicit png_reader(const std::string& path) : file(open_file(path, "rb")) {
    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8))
      throw png_error("not a PNG file: " + path);
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw png_error("png_create_read_struct failed");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_read_struct(&png, nullptr, nullptr);
      throw png_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_read_struct(&png, &info, nullptr);
      png = nullptr;
      throw png_error("libpng failure reading " + path);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    bit_depth = png_get_bit_depth(png, info);
    color_type = png_get_color_type(png, info);
  }
  ~png_reader() {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
  }
  png_reader(const png_reader&) = delete;
  png_reader& operator=(const png_reader&) = delete;
};

}  // namespace detail

inline void save_png_rgb8(const std::string& path, const image<vec3d>& img) {
  detail::write_png(path, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB,
                    [&](int y, png_byte* row) {
                      for (int x = 0; x < img.width(); x++) {
                        vec3d c = clamp(img.at(x, y), 0.0, 1.0);
                        row[3 * x + 0] = png_byte(std::lround(c.x * 255.0));
                        row[3 * x + 1] = png_byte(std::lround(c.y * 255.0));
                        row[3 * x + 2] = png_byte(std::lround(c.z * 255.0));
                      }
                    });
}

inline void save_png_gray8(const std::string& path, const image<uint8_t>& img) {
  detail::write_png(path, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY,
                    [&](int y, png_byte* row) {
                      std::memcpy(row, &img.at(0, y), size_t(img.width()));
                    });
}

inline void save_png_gray16(const std::string& path, const image<uint16_t>& img) {
  detail::write_png(path, img.width(), img.height(), 16, PNG_COLOR_TYPE_GRAY,
                    [&](int y, png_byte* row) {
                      for (int x = 0; x < img.width(); x++) {
                        uint16_t v = img.at(x, y);  // PNG is big-endian
                        row[2 * x + 0] = png_byte(v >> 8);
                        row[2 * x + 1] = png_byte(v & 0xff);
                      }
                    });
}

inline image<vec3d> load_png_rgb8(const std::string& path) {
  detail::png_reader r(path);
  if (r.bit_depth != 8 || r.color_type != PNG_COLOR_TYPE_RGB)
    throw png_error("expected 8-bit RGB PNG: " + path);
  image<vec3d> img(r.width, r.height);
  std::vector<png_byte> row(size_t(r.width) * 3);
  for (int y = 0; y < r.height; y++) {
    png_read_row(r.png, row.data(), nullptr);
    for (int x = 0; x < r.width; x++)
      img.at(x, y) = {row[3 * x] / 255.0, row[3 * x + 1] / 255.0, row[3 * x + 2] / 255.0};
  }
  return img;
}

inline image<uint8_t> load_png_gray8(const std::string& path) {
  detail::png_reader r(path);
  if (r.bit_depth != 8 || r.color_type != PNG_COLOR_TYPE_GRAY)
    throw png_error("expected 8-bit grayscale PNG: " + path);
  image<uint8_t> img(r.width, r.height);
  for (int y = 0; y < r.height; y++) png_read_row(r.png, &img.at(0, y), nullptr);
  return img;
}

inline image<uint16_t> load_png_gray16(const std::string& path) {
  detail::png_reader r(path);
  if (r.bit_depth != 16 || r.color_type != PNG_COLOR_TYPE_GRAY)
    throw png_error("expected 16-bit grayscale PNG: " + path);
  image<uint16_t> img(r.width, r.height);
  std::vector<png_byte> row(size_t(r.width) * 2);
  for (int y = 0; y < r.height; y++) {
    png_read_row(r.png, row.data(), nullptr);
    for (int x = 0; x < r.width; x++)
      img.at(x, y) = uint16_t((row[2 * x] << 8) | row[2 * x + 1]);
  }
  return img;
}

}  // namespace voxray
