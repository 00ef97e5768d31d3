#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tabdpo {

// One table cell. `text` is authoritative; `numeric_value` is a best-effort
// reading of it (currency, percent and thousands separators ignored).
class Cell {
 public:
  Cell() = default;
  explicit Cell(std::string text);

  const std::string& text() const noexcept { return text_; }
  const std::optional<double>& numeric_value() const noexcept { return numeric_; }

  friend bool operator==(const Cell& a, const Cell& b) { return a.text_ == b.text_; }

 private:
  std::string text_;
  std::optional<double> numeric_;
};

// Logical grid with a single header row. Immutable once built; every
// constructor path goes through validation.
class Table {
 public:
  // Throws EmptyTableError for an empty header, InvalidTableError for a blank
  // header name or forbidden control characters, RaggedRowError for rows
  // whose width differs from the header.
  Table(std::vector<std::string> header, std::vector<std::vector<Cell>> rows,
        std::optional<std::string> caption = std::nullopt, std::string id = {});

  // Convenience for literal tables in code and tests.
  static Table from_strings(std::vector<std::string> header,
                            const std::vector<std::vector<std::string>>& rows,
                            std::optional<std::string> caption = std::nullopt,
                            std::string id = {});

  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<std::vector<Cell>>& rows() const noexcept { return rows_; }
  const std::optional<std::string>& caption() const noexcept { return caption_; }
  const std::string& id() const noexcept { return id_; }

  std::size_t column_count() const noexcept { return header_.size(); }
  std::size_t row_count() const noexcept { return rows_.size(); }

  Table with_id(std::string id) const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
  std::optional<std::string> caption_;
  std::string id_;
};

enum class TaskKind { QuestionAnswering, FactVerifyBinary, FactVerifyTernary };

std::string_view to_string(TaskKind task);
// Accepts "qa", "tfv-binary", "tfv-ternary" and a few aliases.
std::optional<TaskKind> parse_task_kind(std::string_view name);

struct Instance {
  std::string id;
  Table table;
  std::string question;
  std::vector<std::string> gold_answers;
  TaskKind task = TaskKind::QuestionAnswering;
  // Source dataset label used to group metrics; "default" when absent.
  std::string dataset = "default";
  // Free-form answers (BLEU-scored) are never used for pair construction.
  bool free_form = false;
};

enum class SizeBucket { Small, Medium, Large };

std::string_view to_string(SizeBucket bucket);

// <1000 Small, 1000..2000 Medium (inclusive), >2000 Large.
SizeBucket size_bucket(std::size_t n_tokens) noexcept;

// --- ingestion --------------------------------------------------------------

enum class TableFormat { Interchange, Delimited };

struct DelimitedOptions {
  char delimiter = ',';
  std::string table_id;
};

// Interchange form is a JSON object {header, rows, caption?, id?}. Delimited
// form has a mandatory header line and RFC 4180 quoting.
Table parse_table(std::string_view source, TableFormat format,
                  const DelimitedOptions& delimited = {});

// Parses one instance object {id, question, answers, task, table, dataset?,
// free_form?}.
Instance parse_instance_json(std::string_view json_text);

// Reads a JSON array of instances or one instance per line (JSONL). Errors
// carry the 1-based line (JSONL) or element index (array).
std::vector<Instance> load_instances(const std::string& path);
std::vector<Instance> parse_instances(std::string_view text);

std::string instance_to_json(const Instance& instance);

// Strips control characters other than tab and newline, and folds CRLF / CR
// into LF. Throws DecodeError for invalid UTF-8.
std::string normalize_cell_text(std::string_view raw);

bool is_valid_utf8(std::string_view text) noexcept;

// --- token counting ---------------------------------------------------------

// Splits on whitespace; within each run, every ASCII punctuation character is
// its own token and maximal runs of other characters are one token.
std::size_t count_tokens(std::string_view text) noexcept;

using TokenCounter = std::function<std::size_t(std::string_view)>;

// Sums tokens over header names, cell texts and the caption. The counted
// scope is the table only, never question or prompt.
std::size_t token_count(const Table& table);
std::size_t token_count(const Table& table, const TokenCounter& counter);

}  // namespace tabdpo
