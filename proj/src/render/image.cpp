#include <nlohmann/json.hpp>

#include <algorithm>
#include <random>

#include "tabdpo/errors.hpp"
#include "tabdpo/image_render.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo {

namespace {

#include "font_data.inc"

constexpr char32_t kEllipsis = U'…';

int glyph_index(char32_t cp) {
  if (cp == '\t') cp = ' ';
  if (cp >= 0x20 && cp <= 0x7E) return static_cast<int>(cp - 0x20);
  if (cp == kEllipsis) return kEllipsisGlyph;
  return '?' - 0x20;
}

nlohmann::ordered_json rgb_json(const Rgb& c) { return {c.r, c.g, c.b}; }

void fill_rect(Raster& img, int x0, int y0, int w, int h, const Rgb& color) {
  for (int y = y0; y < y0 + h; ++y) {
    auto* p = img.rgb.data() + (static_cast<std::size_t>(y) * img.width + x0) * 3;
    for (int x = 0; x < w; ++x) {
      *p++ = color.r;
      *p++ = color.g;
      *p++ = color.b;
    }
  }
}

void draw_glyph(Raster& img, int x0, int y0, int scale, int glyph, const Rgb& color) {
  for (int gy = 0; gy < kGlyphHeight; ++gy) {
    const unsigned bits = kGlyphs[glyph][gy];
    if (bits == 0) continue;
    for (int gx = 0; gx < kGlyphWidth; ++gx) {
      if (!(bits & (1u << (kGlyphWidth - 1 - gx)))) continue;
      fill_rect(img, x0 + gx * scale, y0 + gy * scale, scale, scale, color);
    }
  }
}

std::vector<std::u32string> split_words(const std::u32string& paragraph) {
  std::vector<std::u32string> words;
  std::u32string current;
  for (char32_t cp : paragraph) {
    if (cp == U' ' || cp == U'\t') {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace

void ImageStyle::validate() const {
  const auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("style.") + name, "must be positive");
  };
  positive(cell_padding_px, "cell_padding_px");
  positive(font_size_px, "font_size_px");
  positive(grid_line_width_px, "grid_line_width_px");
  positive(wrap_chars, "wrap_chars");
  positive(max_lines, "max_lines");
  if (max_width_px < 64) throw ConfigError("style.max_width_px", "must be at least 64");
}

std::string ImageStyle::fingerprint() const {
  nlohmann::ordered_json j;
  j["cell_padding_px"] = cell_padding_px;
  j["font_size_px"] = font_size_px;
  j["grid_line_width_px"] = grid_line_width_px;
  j["header_background"] = rgb_json(header_background);
  j["body_background"] = rgb_json(body_background);
  j["text_color"] = rgb_json(text_color);
  j["grid_color"] = rgb_json(grid_color);
  j["max_width_px"] = max_width_px;
  j["wrap_chars"] = wrap_chars;
  j["max_lines"] = max_lines;
  j["font"] = "dejavu-sans-mono-7x15";
  return util::sha256_hex(j.dump()).substr(0, 16);
}

ImageStyle randomized_style(const ImageStyle& base, std::uint64_t seed) {
  std::mt19937_64 rng(util::mix_seed({seed, 0x5354594cULL}));
  const auto pick = [&](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  const auto light = [&] {
    return Rgb{static_cast<std::uint8_t>(pick(190, 255)), static_cast<std::uint8_t>(pick(190, 255)),
               static_cast<std::uint8_t>(pick(190, 255))};
  };
  ImageStyle s = base;
  s.cell_padding_px = pick(2, 8);
  s.grid_line_width_px = pick(1, 2);
  s.header_background = light();
  s.body_background = light();
  s.text_color = Rgb{static_cast<std::uint8_t>(pick(0, 60)), static_cast<std::uint8_t>(pick(0, 60)),
                     static_cast<std::uint8_t>(pick(0, 60))};
  s.grid_color = Rgb{static_cast<std::uint8_t>(pick(0, 120)),
                     static_cast<std::uint8_t>(pick(0, 120)),
                     static_cast<std::uint8_t>(pick(0, 120))};
  return s;
}

std::vector<std::u32string> wrap_cell(std::string_view text, int wrap_chars, int max_lines) {
  const auto width = static_cast<std::size_t>(wrap_chars);
  std::vector<std::u32string> lines;
  std::u32string all;
  for (char32_t cp : util::utf8_decode(text)) all.push_back(cp);

  std::size_t start = 0;
  while (start <= all.size()) {
    std::size_t nl = all.find(U'\n', start);
    if (nl == std::u32string::npos) nl = all.size();
    const auto words = split_words(all.substr(start, nl - start));
    std::u32string line;
    bool emitted = false;
    for (const auto& word : words) {
      std::u32string w = word;
      while (!w.empty()) {
        const std::size_t room = line.empty() ? width : width - std::min(width, line.size() + 1);
        if (w.size() <= room) {
          if (!line.empty()) line.push_back(U' ');
          line += w;
          w.clear();
        } else if (line.empty()) {
          // A word longer than the line is split hard.
          lines.push_back(w.substr(0, width));
          emitted = true;
          w.erase(0, width);
        } else {
          lines.push_back(std::move(line));
          emitted = true;
          line.clear();
        }
      }
    }
    if (!line.empty() || !emitted) lines.push_back(std::move(line));
    start = nl + 1;
  }
  if (lines.empty()) lines.emplace_back();

  const auto keep = static_cast<std::size_t>(max_lines);
  if (lines.size() > keep) {
    lines.resize(keep);
    auto& last = lines.back();
    if (last.size() >= width) last.resize(width - 1);
    last.push_back(kEllipsis);
  }
  return lines;
}

TableLayout layout_table(const Table& table, const ImageStyle& style) {
  style.validate();
  TableLayout layout;
  const std::size_t n_rows = table.row_count() + 1;
  const std::size_t n_cols = table.column_count();
  layout.lines.assign(n_rows, std::vector<std::vector<std::u32string>>(n_cols));
  std::vector<std::size_t> col_chars(n_cols, 0);
  std::vector<std::size_t> row_lines(n_rows, 1);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      const std::string& text = r == 0 ? table.header()[c] : table.rows()[r - 1][c].text();
      auto lines = wrap_cell(text, style.wrap_chars, style.max_lines);
      for (const auto& l : lines) col_chars[c] = std::max(col_chars[c], l.size());
      row_lines[r] = std::max(row_lines[r], lines.size());
      layout.lines[r][c] = std::move(lines);
    }
  }

  const int grid = style.grid_line_width_px;
  const int pad = style.cell_padding_px;
  const auto width_at = [&](int scale) {
    long w = grid;
    for (auto chars : col_chars) w += 2L * pad + static_cast<long>(chars) * kGlyphWidth * scale + grid;
    return w;
  };
  int scale = std::max(1, style.font_size_px / kGlyphHeight);
  while (scale > 1 && width_at(scale) > style.max_width_px) --scale;
  const long width = width_at(scale);
  if (width > style.max_width_px) {
    throw OversizeError(static_cast<int>(std::min<long>(width, INT32_MAX)), style.max_width_px);
  }

  layout.scale = scale;
  layout.glyph_width = kGlyphWidth * scale;
  layout.line_height = kGlyphHeight * scale;
  for (auto chars : col_chars) {
    layout.column_content_px.push_back(static_cast<int>(chars) * layout.glyph_width);
  }
  long height = grid;
  for (auto lines : row_lines) {
    layout.row_content_px.push_back(static_cast<int>(lines) * layout.line_height);
    height += 2L * pad + layout.row_content_px.back() + grid;
  }
  layout.width = static_cast<int>(width);
  layout.height = static_cast<int>(height);
  return layout;
}

std::string ImageRendering::file_name() const {
  std::string id = source_table_id.empty() ? "table" : source_table_id;
  for (auto& c : id) {
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '-' || c == '_' || c == '.';
    if (!safe) c = '_';
  }
  if (id.front() == '.') id.front() = '_';
  return id + "." + style_fingerprint + ".png";
}

ImageRendering render_image(const Table& table, const ImageStyle& style) {
  const TableLayout layout = layout_table(table, style);
  Raster img;
  img.width = layout.width;
  img.height = layout.height;
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  fill_rect(img, 0, 0, img.width, img.height, style.grid_color);

  const int grid = style.grid_line_width_px;
  const int pad = style.cell_padding_px;
  int y = grid;
  for (std::size_t r = 0; r < layout.row_content_px.size(); ++r) {
    const int cell_h = 2 * pad + layout.row_content_px[r];
    const Rgb& bg = r == 0 ? style.header_background : style.body_background;
    int x = grid;
    for (std::size_t c = 0; c < layout.column_content_px.size(); ++c) {
      const int cell_w = 2 * pad + layout.column_content_px[c];
      fill_rect(img, x, y, cell_w, cell_h, bg);
      int line_y = y + pad;
      for (const auto& line : layout.lines[r][c]) {
        int glyph_x = x + pad;
        for (char32_t cp : line) {
          draw_glyph(img, glyph_x, line_y, layout.scale, glyph_index(cp), style.text_color);
          glyph_x += layout.glyph_width;
        }
        line_y += layout.line_height;
      }
      x += cell_w + grid;
    }
    y += cell_h + grid;
  }

  ImageRendering out;
  out.encoded = encode_png(img);
  out.pixels = std::move(img);
  out.source_table_id = table.id();
  out.style_fingerprint = style.fingerprint();
  return out;
}

}  // namespace tabdpo
