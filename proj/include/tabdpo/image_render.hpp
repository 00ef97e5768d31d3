#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tabdpo/table.hpp"

namespace tabdpo {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ImageStyle {
  int cell_padding_px = 4;
  // Glyphs are 7x15 bitmaps scaled by floor(font_size_px / 15), at least 1.
  int font_size_px = 15;
  int grid_line_width_px = 1;
  Rgb header_background{221, 221, 221};
  Rgb body_background{255, 255, 255};
  Rgb text_color{0, 0, 0};
  Rgb grid_color{0, 0, 0};
  int max_width_px = 2048;
  // Characters per line before a cell wraps, and lines kept before the last
  // kept line is cut with an ellipsis.
  int wrap_chars = 40;
  int max_lines = 3;

  // Throws ConfigError on non-positive sizes or max_width_px < 64.
  void validate() const;
  // 16 hex chars of SHA-256 over every field.
  std::string fingerprint() const;

  friend bool operator==(const ImageStyle&, const ImageStyle&) = default;
};

// Seeded variation of colors, padding and grid width; font metrics and
// limits are kept from `base`.
ImageStyle randomized_style(const ImageStyle& base, std::uint64_t seed);

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Rgb pixel(int x, int y) const {
    const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  friend bool operator==(const Raster&, const Raster&) = default;
};

// Cell geometry before drawing. `lines[r][c]` holds the wrapped lines of row
// r (row 0 is the header), each as UTF-32 so widths are code-point counts.
struct TableLayout {
  int scale = 1;
  int glyph_width = 0;
  int line_height = 0;
  std::vector<int> column_content_px;
  std::vector<int> row_content_px;
  std::vector<std::vector<std::vector<std::u32string>>> lines;
  int width = 0;
  int height = 0;
};

// Word-wraps one cell to at most `max_lines` lines of `wrap_chars` code
// points; overflow ends the last line with U+2026.
std::vector<std::u32string> wrap_cell(std::string_view text, int wrap_chars, int max_lines);

// Throws OversizeError if even scale 1 is wider than max_width_px.
TableLayout layout_table(const Table& table, const ImageStyle& style);

struct ImageRendering {
  Raster pixels;
  std::vector<std::uint8_t> encoded;
  std::string source_table_id;
  std::string style_fingerprint;

  // "<table_id>.<style_fingerprint>.png" with filesystem-unsafe characters
  // in the id replaced by '_'.
  std::string file_name() const;
};

ImageRendering render_image(const Table& table, const ImageStyle& style = {});

// 8-bit RGB, no interlace, filter 0 on every row, zlib level 9.
std::vector<std::uint8_t> encode_png(const Raster& raster);
// Accepts 8-bit RGB non-interlaced PNGs with any row filter.
Raster decode_png(std::span<const std::uint8_t> png);

}  // namespace tabdpo
