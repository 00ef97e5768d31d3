#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tabdpo/pair_builder.hpp"

namespace tabdpo::io {

inline constexpr std::string_view kPairSchemaVersion = "1.0";
inline constexpr std::string_view kToolVersion = "0.3.0";

// One line of pairs.jsonl. Key order on disk follows the declaration order
// below; see docs/pair_schema.md.
struct PairRecord {
  std::string schema_version{kPairSchemaVersion};
  std::string instance_id;
  std::string question;
  std::string table_text;  // Markdown
  std::string image_path;  // relative to the run directory
  std::string positive;
  std::string negative;
  std::string strategy;
  std::optional<std::uint64_t> strategy_seed;
  int negative_frequency = 0;
  std::map<std::string, int> negative_modality_counts;  // text/image/hybrid
  std::string run_id;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

PairRecord make_record(const BuildItem& item, const std::string& image_path,
                       const std::string& run_id);

std::string record_to_json(const PairRecord& record);
// Throws ParseError(line) on missing or mistyped fields and
// SchemaVersionError for any version other than kPairSchemaVersion.
PairRecord record_from_json(std::string_view line, std::size_t line_no);

// Reproducibility snapshot written next to the pairs.
struct RunManifest {
  std::string run_id;
  std::string tool_version{kToolVersion};
  std::string config_json;  // canonical dump of the effective configuration
  std::map<std::string, std::string> input_checksums;  // path -> sha256
  std::string model;
  std::string started_at;
  std::string finished_at;

  std::string to_json() const;
};

// Streams pairs into `<run_dir>/pairs.jsonl`, PNGs into `<run_dir>/images/`
// (once per table). Lines are LF-terminated UTF-8 with no trailing spaces.
class PairWriter {
 public:
  // Creates the run directory layout; throws IoError.
  explicit PairWriter(std::filesystem::path run_dir, std::string run_id);
  ~PairWriter();

  PairWriter(const PairWriter&) = delete;
  PairWriter& operator=(const PairWriter&) = delete;

  // Throws DuplicateInstanceError if the instance was already written.
  void write(const BuildItem& item);
  void finish();

  std::size_t written() const noexcept { return written_; }
  const std::filesystem::path& run_dir() const noexcept { return run_dir_; }

 private:
  std::filesystem::path run_dir_;
  std::string run_id_;
  std::string buffer_;
  std::map<std::string, std::string> images_written_;
  std::map<std::string, bool> seen_ids_;
  std::size_t written_ = 0;
  bool finished_ = false;
};

// Writes a whole pair list at once (pairs.jsonl + images + manifest).
void write_pairs(const std::vector<BuildItem>& items, const std::filesystem::path& run_dir,
                 const RunManifest& manifest);

std::vector<PairRecord> read_pairs(const std::filesystem::path& path);
std::vector<PairRecord> parse_pairs(std::string_view jsonl);

std::string stats_to_json(const BuildStats& stats, bool complete);

// UTC "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace tabdpo::io
