#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>

#include "tabdpo/dataset_io.hpp"
#include "tabdpo/errors.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo::io {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

PairRecord make_record(const BuildItem& item, const std::string& image_path,
                       const std::string& run_id) {
  PairRecord r;
  r.instance_id = item.pair.instance_id;
  r.question = item.instance ? item.instance->question : std::string();
  if (item.renderings) {
    r.table_text = item.renderings->text.format == TextFormat::Markdown
                       ? item.renderings->text.text
                       : render_text(item.instance->table, TextFormat::Markdown).text;
  }
  r.image_path = image_path;
  r.positive = item.pair.positive;
  r.negative = item.pair.negative;
  r.strategy = std::string(to_string(item.pair.strategy.kind));
  r.strategy_seed = item.pair.strategy.seed;
  r.negative_frequency = item.pair.negative_frequency;
  for (const auto& [m, c] : item.pair.negative_modality_counts) {
    r.negative_modality_counts[std::string(to_string(m))] = c;
  }
  r.run_id = run_id;
  return r;
}

std::string record_to_json(const PairRecord& record) {
  ordered_json j;
  j["schema_version"] = record.schema_version;
  j["instance_id"] = record.instance_id;
  j["question"] = record.question;
  j["table_text"] = record.table_text;
  j["image_path"] = record.image_path;
  j["positive"] = record.positive;
  j["negative"] = record.negative;
  j["strategy"] = record.strategy;
  if (record.strategy_seed) j["strategy_seed"] = *record.strategy_seed;
  j["negative_frequency"] = record.negative_frequency;
  ordered_json counts = ordered_json::object();
  for (auto m : kAllModalities) {
    const std::string name(to_string(m));
    const auto it = record.negative_modality_counts.find(name);
    if (it != record.negative_modality_counts.end()) counts[name] = it->second;
  }
  for (const auto& [name, c] : record.negative_modality_counts) {
    if (!counts.contains(name)) counts[name] = c;
  }
  j["negative_modality_counts"] = std::move(counts);
  j["run_id"] = record.run_id;
  return j.dump();
}

PairRecord record_from_json(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ParseError(line_no, "not valid JSON");
  }
  if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
  const auto str = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw ParseError(line_no, std::string("missing string field '") + key + "'");
    }
    return j[key].get<std::string>();
  };
  PairRecord r;
  r.schema_version = str("schema_version");
  if (r.schema_version != kPairSchemaVersion) {
    throw SchemaVersionError(r.schema_version, std::string(kPairSchemaVersion));
  }
  r.instance_id = str("instance_id");
  r.question = str("question");
  r.table_text = str("table_text");
  r.image_path = str("image_path");
  r.positive = str("positive");
  r.negative = str("negative");
  r.strategy = str("strategy");
  r.run_id = str("run_id");
  if (j.contains("strategy_seed")) {
    if (!j["strategy_seed"].is_number_unsigned()) {
      throw ParseError(line_no, "strategy_seed must be a non-negative integer");
    }
    r.strategy_seed = j["strategy_seed"].get<std::uint64_t>();
  }
  if (!j.contains("negative_frequency") || !j["negative_frequency"].is_number_integer()) {
    throw ParseError(line_no, "missing integer field 'negative_frequency'");
  }
  r.negative_frequency = j["negative_frequency"].get<int>();
  if (!j.contains("negative_modality_counts") || !j["negative_modality_counts"].is_object()) {
    throw ParseError(line_no, "missing object field 'negative_modality_counts'");
  }
  for (const auto& [name, c] : j["negative_modality_counts"].items()) {
    if (!c.is_number_integer()) throw ParseError(line_no, "modality counts must be integers");
    r.negative_modality_counts[name] = c.get<int>();
  }
  if (r.image_path.find("..") != std::string::npos || fs::path(r.image_path).is_absolute()) {
    throw ParseError(line_no, "image_path must stay inside the run directory");
  }
  return r;
}

std::string RunManifest::to_json() const {
  ordered_json j;
  j["run_id"] = run_id;
  j["tool_version"] = tool_version;
  j["model"] = model;
  ordered_json checksums = ordered_json::object();
  for (const auto& [path, sum] : input_checksums) checksums[path] = sum;
  j["input_checksums"] = std::move(checksums);
  j["config"] = config_json.empty() ? ordered_json::object() : ordered_json::parse(config_json);
  j["message_layout"] = "[system: template preamble][user: question + table text + image]";
  j["token_count_scope"] = "table only (header, cells, caption)";
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j.dump(2) + "\n";
}

PairWriter::PairWriter(fs::path run_dir, std::string run_id)
    : run_dir_(std::move(run_dir)), run_id_(std::move(run_id)) {
  std::error_code ec;
  fs::create_directories(run_dir_ / "images", ec);
  if (ec) throw IoError("cannot create " + (run_dir_ / "images").string() + ": " + ec.message());
}

PairWriter::~PairWriter() = default;

void PairWriter::write(const BuildItem& item) {
  if (finished_) throw IoError("pair writer already finished");
  if (!seen_ids_.emplace(item.pair.instance_id, true).second) {
    throw DuplicateInstanceError(item.pair.instance_id);
  }
  std::string image_path;
  if (item.renderings && item.renderings->image) {
    const auto& image = *item.renderings->image;
    std::string name = image.file_name();
    const std::string digest = util::sha256_hex(
        std::string_view(reinterpret_cast<const char*>(image.encoded.data()), image.encoded.size()));
    auto it = images_written_.find(name);
    if (it != images_written_.end() && it->second != digest) {
      // Two different tables share an id: keep both.
      name = name.substr(0, name.size() - 4) + "." + digest.substr(0, 8) + ".png";
      it = images_written_.find(name);
    }
    if (it == images_written_.end()) {
      util::write_file((run_dir_ / "images" / name).string(),
                       std::string_view(reinterpret_cast<const char*>(image.encoded.data()),
                                        image.encoded.size()));
      images_written_[name] = digest;
    }
    image_path = "images/" + name;
  }
  buffer_ += record_to_json(make_record(item, image_path, run_id_));
  buffer_.push_back('\n');
  ++written_;
}

void PairWriter::finish() {
  if (finished_) return;
  util::write_file((run_dir_ / "pairs.jsonl").string(), buffer_);
  finished_ = true;
}

void write_pairs(const std::vector<BuildItem>& items, const fs::path& run_dir,
                 const RunManifest& manifest) {
  PairWriter writer(run_dir, manifest.run_id);
  for (const auto& item : items) writer.write(item);
  writer.finish();
  util::write_file((run_dir / "manifest.json").string(), manifest.to_json());
}

std::vector<PairRecord> parse_pairs(std::string_view jsonl) {
  std::vector<PairRecord> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const auto line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (util::trim(line).empty()) continue;
    out.push_back(record_from_json(line, line_no));
  }
  return out;
}

std::vector<PairRecord> read_pairs(const fs::path& path) {
  return parse_pairs(util::read_file(path.string()));
}

std::string stats_to_json(const BuildStats& stats, bool complete) {
  ordered_json j;
  j["complete"] = complete;
  j["total"] = stats.total;
  j["retained"] = stats.retained;
  j["dropped_no_correct"] = stats.dropped_no_correct;
  j["dropped_no_incorrect"] = stats.dropped_no_incorrect;
  j["skipped_free_form"] = stats.skipped_free_form;
  j["errored"] = stats.errored;
  j["cancelled"] = stats.cancelled;
  j["error_rate"] = stats.error_rate();
  j["threshold_exceeded"] = stats.threshold_exceeded;
  ordered_json by_modality = ordered_json::object();
  for (auto m : kAllModalities) {
    const auto it = stats.responses_by_modality.find(m);
    by_modality[std::string(to_string(m))] = it == stats.responses_by_modality.end() ? 0 : it->second;
  }
  j["responses_by_modality"] = std::move(by_modality);
  ordered_json errors = ordered_json::array();
  for (const auto& e : stats.errors) {
    errors.push_back({{"instance_id", e.instance_id}, {"message", e.message}});
  }
  j["errors"] = std::move(errors);
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace tabdpo::io
