#pragma once

#include <png.h>

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/io.hpp"
#include "amplify/tensor.hpp"

namespace amplify {

inline void write_png(const fs::path& path, const Tensor<u8>& img) {
  AMPLIFY_CHECK(img.ndim() == 3 && img.dim(2) == 3, "write_png expects [H,W,3]");
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  AMPLIFY_CHECK(fp != nullptr, "cannot open for write: ", path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  AMPLIFY_CHECK(png != nullptr && info != nullptr, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail("libpng write failed: ", path.string());
  }
  png_init_io(png, fp);
  const int h = static_cast<int>(img.dim(0)), w = static_cast<int>(img.dim(1));
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) {
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * static_cast<size_t>(w) * 3);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

namespace plotting {

using Color = std::array<u8, 3>;

struct Canvas {
  Tensor<u8> img;
  int w = 0, h = 0;

  Canvas(int width, int height, Color bg) : img({height, width, 3}), w(width), h(height) {
    for (i64 i = 0; i < img.numel(); i += 3) {
      img.data[static_cast<size_t>(i)] = bg[0];
      img.data[static_cast<size_t>(i + 1)] = bg[1];
      img.data[static_cast<size_t>(i + 2)] = bg[2];
    }
  }

  void put(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    const size_t o = (static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)) * 3;
    img.data[o] = c[0];
    img.data[o + 1] = c[1];
    img.data[o + 2] = c[2];
  }

  void fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) put(x, y, c);
    }
  }

  void hline(int x0, int x1, int y, Color c) {
    for (int x = x0; x <= x1; ++x) put(x, y, c);
  }
  void vline(int x, int y0, int y1, Color c) {
    for (int y = y0; y <= y1; ++y) put(x, y, c);
  }
};

// 5x7 bitmap glyphs, one byte per row, low 5 bits used.
struct Glyph {
  char c;
  std::array<u8, 7> rows;
};

inline const Glyph* find_glyph(char c) {
  static const std::vector<Glyph> kFont = {
      {' ', {0, 0, 0, 0, 0, 0, 0}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x06, 0x06}},
      {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
      {':', {0x00, 0x06, 0x06, 0x00, 0x06, 0x06, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
  };
  for (const auto& g : kFont) {
    if (g.c == c) return &g;
  }
  return nullptr;
}

inline void draw_text(Canvas& canvas, int x, int y, const std::string& text, Color c) {
  int cx = x;
  for (char raw : text) {
    const char ch = raw >= 'a' && raw <= 'z' ? static_cast<char>(raw - 'a' + 'A') : raw;
    const Glyph* g = find_glyph(ch);
    if (g != nullptr) {
      for (int r = 0; r < 7; ++r) {
        for (int b = 0; b < 5; ++b) {
          if (g->rows[static_cast<size_t>(r)] & (1 << (4 - b))) canvas.put(cx + b, y + r, c);
        }
      }
    }
    cx += 6;
  }
}

}  // namespace plotting

// Grouped bar chart: one cluster per group, one bar per series, values in
// [0, 1]. Deterministic bytes for identical inputs.
struct BarChart {
  std::string title;
  std::string y_label = "SUCCESS";
  std::vector<std::string> groups;
  std::vector<std::string> series;
  std::vector<std::vector<double>> values;  // [group][series]
};

inline Tensor<u8> render_bar_chart(const BarChart& chart) {
  using plotting::Canvas;
  using plotting::Color;
  AMPLIFY_CHECK(!chart.groups.empty() && !chart.series.empty(), "empty chart");
  AMPLIFY_CHECK(chart.values.size() == chart.groups.size(), "chart rows mismatch");

  static const std::vector<Color> kPalette = {
      {66, 133, 244}, {219, 68, 55}, {244, 180, 0}, {15, 157, 88}, {171, 71, 188}};
  const int width = 640, height = 400;
  Canvas canvas(width, height, {250, 250, 250});
  const int left = 70, right = width - 20, top = 50, bottom = height - 60;

  plotting::draw_text(canvas, left, 16, chart.title, {30, 30, 30});
  plotting::draw_text(canvas, 8, top - 20, chart.y_label, {60, 60, 60});

  canvas.vline(left, top, bottom, {40, 40, 40});
  canvas.hline(left, right, bottom, {40, 40, 40});
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const int y = bottom - static_cast<int>(v * (bottom - top));
    canvas.hline(left - 4, left, y, {40, 40, 40});
    if (tick > 0) canvas.hline(left + 1, right, y, {225, 225, 225});
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    plotting::draw_text(canvas, left - 40, y - 3, buf, {60, 60, 60});
  }

  const int ngroups = static_cast<int>(chart.groups.size());
  const int nseries = static_cast<int>(chart.series.size());
  const int group_width = (right - left) / ngroups;
  const int bar_width = std::max(4, (group_width - 20) / nseries);
  for (int gi = 0; gi < ngroups; ++gi) {
    AMPLIFY_CHECK(chart.values[static_cast<size_t>(gi)].size() == chart.series.size(),
                  "chart cols mismatch");
    const int gx = left + gi * group_width + 10;
    for (int si = 0; si < nseries; ++si) {
      const double v = std::clamp(chart.values[static_cast<size_t>(gi)][static_cast<size_t>(si)], 0.0, 1.0);
      const int x0 = gx + si * bar_width;
      const int y0 = bottom - static_cast<int>(v * (bottom - top));
      canvas.fill_rect(x0, y0, x0 + bar_width - 2, bottom, kPalette[static_cast<size_t>(si) % kPalette.size()]);
    }
    plotting::draw_text(canvas, gx, bottom + 8,
                        chart.groups[static_cast<size_t>(gi)].substr(0, 12), {60, 60, 60});
  }

  int ly = top - 36;
  int lx = left + 150;
  for (int si = 0; si < nseries; ++si) {
    canvas.fill_rect(lx, ly, lx + 10, ly + 8, kPalette[static_cast<size_t>(si) % kPalette.size()]);
    plotting::draw_text(canvas, lx + 14, ly, chart.series[static_cast<size_t>(si)].substr(0, 18),
                        {60, 60, 60});
    lx += 14 + 6 * 19;
  }
  return canvas.img;
}

}  // namespace amplify
