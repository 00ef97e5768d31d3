#include <nlohmann/json.hpp>

#include "tabdpo/errors.hpp"
#include "tabdpo/text_render.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo {

namespace {

std::string escape_markdown_cell(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '\\':
        out += "\\\\";
        break;
      case '|':
        out += "\\|";
        break;
      case '\n':
        out += "\\n";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

void append_markdown_row(std::string& out, const auto& cells, const auto& text_of) {
  out.push_back('|');
  for (const auto& cell : cells) {
    out.push_back(' ');
    out += escape_markdown_cell(text_of(cell));
    out += " |";
  }
  out.push_back('\n');
}

std::string json_string(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

// Splits one Markdown row into unescaped cell texts.
std::vector<std::string> split_markdown_row(std::string_view line, std::size_t line_no) {
  if (line.size() < 2 || line.front() != '|' || line.back() != '|') {
    throw MarkdownSyntaxError(line_no, "row must start and end with '|'");
  }
  std::vector<std::string> raw;
  std::string current;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '\\') {
      if (i + 1 >= line.size()) throw MarkdownSyntaxError(line_no, "dangling escape");
      const char next = line[i + 1];
      if (next == '\\') {
        current.push_back('\\');
      } else if (next == '|') {
        current.push_back('|');
      } else if (next == 'n') {
        current.push_back('\n');
      } else {
        throw MarkdownSyntaxError(line_no, std::string("unknown escape \\") + next);
      }
      ++i;
    } else if (c == '|') {
      raw.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) throw MarkdownSyntaxError(line_no, "text after final '|'");
  // One space of padding on each side belongs to the grammar, not the cell.
  for (auto& cell : raw) {
    if (!cell.empty() && cell.front() == ' ') cell.erase(0, 1);
    if (!cell.empty() && cell.back() == ' ') cell.pop_back();
  }
  return raw;
}

bool is_separator_cell(std::string_view cell) {
  cell = util::trim(cell);
  if (!cell.empty() && cell.front() == ':') cell.remove_prefix(1);
  if (!cell.empty() && cell.back() == ':') cell.remove_suffix(1);
  if (cell.size() < 3) return false;
  for (char c : cell) {
    if (c != '-') return false;
  }
  return true;
}

bool needs_quotes(std::string_view s, char delimiter) {
  if (s.empty()) return false;
  if (s.front() == ' ' || s.back() == ' ' || s.front() == '\t' || s.back() == '\t') return true;
  for (char c : s) {
    if (c == delimiter || c == '"' || c == '\n' || c == '\r') return true;
  }
  return false;
}

void append_field(std::string& out, std::string_view s, char delimiter, bool quote) {
  if (!quote || !needs_quotes(s, delimiter)) {
    out += s;
    return;
  }
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

}  // namespace

std::string_view to_string(TextFormat format) {
  switch (format) {
    case TextFormat::Markdown:
      return "markdown";
    case TextFormat::DictOfLists:
      return "dict";
    case TextFormat::ListOfRows:
      return "list";
  }
  return "markdown";
}

std::optional<TextFormat> parse_text_format(std::string_view name) {
  const std::string n = util::to_lower_ascii(name);
  if (n == "markdown" || n == "md") return TextFormat::Markdown;
  if (n == "dict" || n == "dict-of-lists") return TextFormat::DictOfLists;
  if (n == "list" || n == "list-of-rows") return TextFormat::ListOfRows;
  return std::nullopt;
}

std::string_view file_extension(TextFormat format) {
  switch (format) {
    case TextFormat::Markdown:
      return ".md";
    case TextFormat::DictOfLists:
      return ".dict.txt";
    case TextFormat::ListOfRows:
      return ".list.txt";
  }
  return ".txt";
}

TextRendering render_text(const Table& table, TextFormat format) {
  TextRendering out{.format = format, .text = {}, .source_table_id = table.id()};
  std::string& text = out.text;
  switch (format) {
    case TextFormat::Markdown: {
      const auto identity = [](const std::string& s) -> const std::string& { return s; };
      append_markdown_row(text, table.header(), identity);
      text.push_back('|');
      for (std::size_t c = 0; c < table.column_count(); ++c) text += " --- |";
      text.push_back('\n');
      const auto cell_text = [](const Cell& c) -> const std::string& { return c.text(); };
      for (const auto& row : table.rows()) append_markdown_row(text, row, cell_text);
      break;
    }
    case TextFormat::DictOfLists: {
      text += "{\n";
      for (std::size_t c = 0; c < table.column_count(); ++c) {
        text += "  " + json_string(table.header()[c]) + ": [";
        for (std::size_t r = 0; r < table.row_count(); ++r) {
          if (r) text += ", ";
          text += json_string(table.rows()[r][c].text());
        }
        text += c + 1 < table.column_count() ? "],\n" : "]\n";
      }
      text += "}\n";
      break;
    }
    case TextFormat::ListOfRows: {
      const auto emit = [&](const auto& cells, const auto& text_of) {
        text.push_back('[');
        bool first = true;
        for (const auto& cell : cells) {
          if (!first) text += ", ";
          first = false;
          text += json_string(text_of(cell));
        }
        text += "]\n";
      };
      emit(table.header(), [](const std::string& s) -> const std::string& { return s; });
      for (const auto& row : table.rows()) {
        emit(row, [](const Cell& c) -> const std::string& { return c.text(); });
      }
      break;
    }
  }
  return out;
}

Table parse_markdown_table(std::string_view text, std::string table_id) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.empty() || util::trim(lines[0]).empty()) {
    throw MarkdownSyntaxError(1, "header expected");
  }
  auto header = split_markdown_row(lines[0], 1);
  if (lines.size() < 2) throw MarkdownSyntaxError(2, "separator expected");
  {
    std::vector<std::string> sep;
    try {
      sep = split_markdown_row(lines[1], 2);
    } catch (const MarkdownSyntaxError&) {
      throw MarkdownSyntaxError(2, "separator expected");
    }
    bool ok = sep.size() == header.size();
    for (const auto& cell : sep) ok = ok && is_separator_cell(cell);
    if (!ok) throw MarkdownSyntaxError(2, "separator expected");
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (util::trim(header[c]).empty()) throw MarkdownSyntaxError(1, "blank header name");
  }
  std::vector<std::vector<Cell>> rows;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto cells = split_markdown_row(lines[i], line_no);
    if (cells.size() != header.size()) {
      throw MarkdownSyntaxError(line_no, "expected " + std::to_string(header.size()) +
                                             " cells, found " + std::to_string(cells.size()));
    }
    std::vector<Cell> row;
    row.reserve(cells.size());
    for (auto& c : cells) row.emplace_back(std::move(c));
    rows.push_back(std::move(row));
  }
  try {
    return Table(std::move(header), std::move(rows), std::nullopt, std::move(table_id));
  } catch (const InvalidTableError& e) {
    throw MarkdownSyntaxError(1, e.what());
  }
}

std::string to_delimited(const Table& table, char delimiter, bool quote) {
  std::string out;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (c) out.push_back(delimiter);
    append_field(out, table.header()[c], delimiter, quote);
  }
  out.push_back('\n');
  for (const auto& row : table.rows()) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out.push_back(delimiter);
      append_field(out, row[c].text(), delimiter, quote);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace tabdpo
