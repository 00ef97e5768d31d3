#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "tabdpo/table.hpp"

namespace tabdpo {

enum class TextFormat { Markdown, DictOfLists, ListOfRows };

std::string_view to_string(TextFormat format);
std::optional<TextFormat> parse_text_format(std::string_view name);
// File extension used when writing a rendering to disk (".md", ...).
std::string_view file_extension(TextFormat format);

struct TextRendering {
  TextFormat format = TextFormat::Markdown;
  std::string text;
  std::string source_table_id;
};

// Markdown:
//   | A | B |
//   | --- | --- |
//   | 1 | 2 |
// Cells are escaped (`\` -> `\\`, `|` -> `\|`, newline -> `\n`) and padded by
// exactly one space on each side. The caption is not part of the grid.
//
// DictOfLists: one `"name": [values]` entry per column inside braces.
// ListOfRows: one JSON array per line, header first.
TextRendering render_text(const Table& table, TextFormat format = TextFormat::Markdown);

// Inverse of render_text(..., Markdown). Throws MarkdownSyntaxError with a
// 1-based line number.
Table parse_markdown_table(std::string_view text, std::string table_id = {});

// Delimiter-separated serialization with a header line. With `quote` set,
// fields containing the delimiter, quotes, line breaks or edge whitespace are
// quoted per RFC 4180 so parse_table(..., Delimited) recovers them exactly.
std::string to_delimited(const Table& table, char delimiter = ',', bool quote = true);

}  // namespace tabdpo
