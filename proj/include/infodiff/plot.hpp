// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "infodiff/image_io.hpp"

namespace infodiff::plot {

namespace detail {

// 5x7 glyphs, one byte per row, low 5 bits used. Covers what axis labels
// need: digits, upper-case letters and a little punctuation.
struct Glyph {
  char c;
  uint8_t rows[7];
};

inline const Glyph* find_glyph(char c) {
  static const Glyph table[] = {
      {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
      {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
      {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
      {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
      {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
      {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
      {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
      {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
      {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
      {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
      {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
      {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
      {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
      {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
      {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
      {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
      {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
      {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
      {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
      {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
      {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
      {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
      {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
      {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1b, 0x11}},
      {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
      {'-', {0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
      {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
  };
  for (const auto& g : table)
    if (g.c == c) return &g;
  return nullptr;
}

struct Canvas {
  io::ImageU8 img;

  Canvas(int64_t w, int64_t h) {
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.assign(static_cast<size_t>(w * h * 3), 255);
  }

  void set(int64_t x, int64_t y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    size_t p = static_cast<size_t>((y * img.width + x) * 3);
    img.pixels[p] = r;
    img.pixels[p + 1] = g;
    img.pixels[p + 2] = b;
  }

  void fill_rect(int64_t x0, int64_t y0, int64_t x1, int64_t y1, uint8_t r,
                 uint8_t g, uint8_t b) {
    for (int64_t y = y0; y < y1; ++y)
      for (int64_t x = x0; x < x1; ++x) set(x, y, r, g, b);
  }

  void text(int64_t x, int64_t y, const std::string& s) {
    for (char raw : s) {
      char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
      if (const Glyph* gl = find_glyph(c)) {
        for (int ry = 0; ry < 7; ++ry)
          for (int rx = 0; rx < 5; ++rx)
            if (gl->rows[ry] & (1 << (4 - rx))) set(x + rx, y + ry, 20, 20, 20);
      }
      x += 6;
    }
  }
};

}  // namespace detail

// Horizontal-axis bar chart with labeled bars; values annotated on top.
inline void bar_chart(const std::string& path, const std::string& title,
                      const std::vector<std::string>& labels,
                      const std::vector<double>& values, int64_t width = 640,
                      int64_t height = 360) {
  if (labels.size() != values.size() || labels.empty())
    throw std::invalid_argument("bar_chart: labels/values mismatch");
  detail::Canvas cv(width, height);
  int64_t left = 40, top = 30, bottom = height - 40;

  double vmax = 0;
  for (double v : values) vmax = std::max(vmax, v);
  if (vmax <= 0) vmax = 1.0;

  cv.text(left, 8, title);
  // axes
  cv.fill_rect(left - 1, top, left, bottom + 1, 20, 20, 20);
  cv.fill_rect(left - 1, bottom, width - 20, bottom + 1, 20, 20, 20);

  int64_t n = static_cast<int64_t>(values.size());
  int64_t span = (width - left - 30) / n;
  int64_t bar = std::max<int64_t>(4, span * 2 / 3);
  for (int64_t i = 0; i < n; ++i) {
    double frac = std::clamp(values[static_cast<size_t>(i)] / vmax, 0.0, 1.0);
    int64_t h = static_cast<int64_t>(std::llround(frac * (bottom - top)));
    int64_t x0 = left + 10 + i * span;
    cv.fill_rect(x0, bottom - h, x0 + bar, bottom, 66, 110, 180);
    char num[32];
    std::snprintf(num, sizeof(num), "%.3f", values[static_cast<size_t>(i)]);
    cv.text(x0, bottom - h - 10, num);
    std::string lab = labels[static_cast<size_t>(i)].substr(0, 10);
    cv.text(x0, bottom + 6, lab);
  }
  io::write_png(path, cv.img);
}

}  // namespace infodiff::plot
