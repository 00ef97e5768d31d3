#include "tabdpo/table.hpp"

#include <cctype>

#include "tabdpo/errors.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo {

namespace {

std::optional<double> best_effort_number(std::string_view text) {
  std::string_view s = util::trim(text);
  static constexpr std::string_view kAffixes[] = {"$", "€", "£", "¥", "%"};
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    for (auto affix : kAffixes) {
      if (s.starts_with(affix)) {
        s.remove_prefix(affix.size());
        changed = true;
      }
      if (s.ends_with(affix)) {
        s.remove_suffix(affix.size());
        changed = true;
      }
    }
    s = util::trim(s);
  }
  return util::parse_decimal(util::strip_digit_grouping(s));
}

bool has_forbidden_control(std::string_view s) {
  for (unsigned char c : s) {
    if ((c < 0x20 && c != '\t' && c != '\n') || c == 0x7F) return true;
  }
  return false;
}

}  // namespace

Cell::Cell(std::string text) : text_(std::move(text)), numeric_(best_effort_number(text_)) {}

Table::Table(std::vector<std::string> header, std::vector<std::vector<Cell>> rows,
             std::optional<std::string> caption, std::string id)
    : header_(std::move(header)),
      rows_(std::move(rows)),
      caption_(std::move(caption)),
      id_(std::move(id)) {
  if (header_.empty()) throw EmptyTableError();
  for (std::size_t c = 0; c < header_.size(); ++c) {
    if (util::trim(header_[c]).empty()) {
      throw InvalidTableError("header name " + std::to_string(c) + " is blank");
    }
    if (has_forbidden_control(header_[c])) {
      throw InvalidTableError("header name " + std::to_string(c) + " has control characters");
    }
  }
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (rows_[r].size() != header_.size()) {
      throw RaggedRowError(r, rows_[r].size(), header_.size());
    }
    for (const auto& cell : rows_[r]) {
      if (has_forbidden_control(cell.text())) {
        throw InvalidTableError("row " + std::to_string(r) + " has control characters");
      }
    }
  }
  if (caption_ && has_forbidden_control(*caption_)) {
    throw InvalidTableError("caption has control characters");
  }
}

Table Table::from_strings(std::vector<std::string> header,
                          const std::vector<std::vector<std::string>>& rows,
                          std::optional<std::string> caption, std::string id) {
  std::vector<std::vector<Cell>> cells;
  cells.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<Cell> out;
    out.reserve(row.size());
    for (const auto& text : row) out.emplace_back(text);
    cells.push_back(std::move(out));
  }
  return Table(std::move(header), std::move(cells), std::move(caption), std::move(id));
}

Table Table::with_id(std::string id) const {
  Table copy = *this;
  copy.id_ = std::move(id);
  return copy;
}

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::QuestionAnswering:
      return "qa";
    case TaskKind::FactVerifyBinary:
      return "tfv-binary";
    case TaskKind::FactVerifyTernary:
      return "tfv-ternary";
  }
  return "qa";
}

std::optional<TaskKind> parse_task_kind(std::string_view name) {
  const std::string n = util::to_lower_ascii(util::trim(name));
  if (n == "qa" || n == "tqa" || n == "question-answering") return TaskKind::QuestionAnswering;
  if (n == "tfv-binary" || n == "binary" || n == "fact-verify-binary") {
    return TaskKind::FactVerifyBinary;
  }
  if (n == "tfv-ternary" || n == "ternary" || n == "fact-verify-ternary") {
    return TaskKind::FactVerifyTernary;
  }
  return std::nullopt;
}

std::string_view to_string(SizeBucket bucket) {
  switch (bucket) {
    case SizeBucket::Small:
      return "small";
    case SizeBucket::Medium:
      return "medium";
    case SizeBucket::Large:
      return "large";
  }
  return "small";
}

SizeBucket size_bucket(std::size_t n_tokens) noexcept {
  if (n_tokens < 1000) return SizeBucket::Small;
  if (n_tokens <= 2000) return SizeBucket::Medium;
  return SizeBucket::Large;
}

bool is_valid_utf8(std::string_view text) noexcept {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len;
    char32_t cp;
    if (b0 < 0x80) {
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      return false;
    }
    if (i + len > text.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (b & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range values.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += len;
  }
  return true;
}

std::string normalize_cell_text(std::string_view raw) {
  if (!is_valid_utf8(raw)) throw DecodeError("input is not valid UTF-8");
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (c == '\r') {
      out.push_back('\n');
      if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
    } else if ((c < 0x20 && c != '\t' && c != '\n') || c == 0x7F) {
      continue;
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::size_t count_tokens(std::string_view text) noexcept {
  std::size_t tokens = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      in_word = false;
    } else if (c < 0x80 && std::ispunct(c)) {
      ++tokens;
      in_word = false;
    } else if (!in_word) {
      ++tokens;
      in_word = true;
    }
  }
  return tokens;
}

std::size_t token_count(const Table& table) {
  return token_count(table, [](std::string_view s) { return count_tokens(s); });
}

std::size_t token_count(const Table& table, const TokenCounter& counter) {
  std::size_t total = 0;
  for (const auto& name : table.header()) total += counter(name);
  for (const auto& row : table.rows()) {
    for (const auto& cell : row) total += counter(cell.text());
  }
  if (table.caption()) total += counter(*table.caption());
  return total;
}

}  // namespace tabdpo
