// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "infodiff/core/errors.hpp"

namespace infodiff::io {

struct ImageU8 {
  int64_t width = 0, height = 0, channels = 3;
  std::vector<uint8_t> pixels;  // row-major, interleaved RGB
};

inline void write_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: 1 or 3 channels only");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IngestError("write_png: cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IngestError("write_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  int64_t stride = img.width * img.channels;
  for (int64_t y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.pixels.data() + y * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline ImageU8 read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IngestError("read_png: cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IngestError("read_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  // normalize everything to 8-bit RGB
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  ImageU8 img;
  img.width = static_cast<int64_t>(png_get_image_width(png, info));
  img.height = static_cast<int64_t>(png_get_image_height(png, info));
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(img.width * img.height * 3));
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int64_t y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = img.pixels.data() + y * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

inline ImageU8 resize_nearest(const ImageU8& src, int64_t size) {
  if (src.width == size && src.height == size) return src;
  ImageU8 out;
  out.width = out.height = size;
  out.channels = src.channels;
  out.pixels.resize(static_cast<size_t>(size * size * src.channels));
  for (int64_t y = 0; y < size; ++y) {
    int64_t sy = y * src.height / size;
    for (int64_t x = 0; x < size; ++x) {
      int64_t sx = x * src.width / size;
      for (int64_t c = 0; c < src.channels; ++c)
        out.pixels[static_cast<size_t>((y * size + x) * src.channels + c)] =
            src.pixels[static_cast<size_t>((sy * src.width + sx) * src.channels + c)];
    }
  }
  return out;
}

// attributes.csv: header "filename,attr1,...", values in {-1,1} or {0,1}.
struct AttrCsv {
  std::vector<std::string> attr_names;
  std::vector<std::string> filenames;
  std::vector<std::vector<int>> rows;  // aligned with filenames, remapped to 0/1
};

inline AttrCsv read_attr_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IngestError("attributes.csv: cannot open " + path);
  AttrCsv out;
  std::string line;
  if (!std::getline(f, line))
    throw IngestError("attributes.csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::stringstream hs(line);
  std::string cell;
  bool first = true;
  while (std::getline(hs, cell, ',')) {
    if (first)
      first = false;  // filename column
    else
      out.attr_names.push_back(cell);
  }
  if (first) throw IngestError("attributes.csv: missing header in " + path);

  size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<int> row;
    std::string fname;
    if (!std::getline(ls, fname, ','))
      throw IngestError("attributes.csv: bad row " + std::to_string(lineno));
    while (std::getline(ls, cell, ',')) {
      int v;
      try {
        v = std::stoi(cell);
      } catch (const std::exception&) {
        throw IngestError("attributes.csv: non-integer value at line " +
                          std::to_string(lineno));
      }
      if (v == -1) v = 0;  // CelebA-style {-1,1}
      if (v != 0 && v != 1)
        throw IngestError("attributes.csv: value out of {-1,0,1} at line " +
                          std::to_string(lineno));
      row.push_back(v);
    }
    if (row.size() != out.attr_names.size())
      throw IngestError("attributes.csv: column count mismatch at line " +
                        std::to_string(lineno));
    out.filenames.push_back(std::move(fname));
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace infodiff::io
