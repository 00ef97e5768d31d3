#include <nlohmann/json.hpp>

#include <set>

#include "tabdpo/errors.hpp"
#include "tabdpo/scoring.hpp"
#include "tabdpo/table.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo {

namespace {

using nlohmann::json;

std::string cell_from_json(const json& v) {
  switch (v.type()) {
    case json::value_t::string:
      return normalize_cell_text(v.get<std::string>());
    case json::value_t::number_integer:
    case json::value_t::number_unsigned:
    case json::value_t::number_float:
      return v.dump();
    case json::value_t::boolean:
      return v.get<bool>() ? "true" : "false";
    case json::value_t::null:
      return {};
    default:
      throw DecodeError("table cells must be scalars");
  }
}

Table table_from_json(const json& obj, const std::string& fallback_id) {
  if (!obj.is_object()) throw DecodeError("table must be an object");
  if (!obj.contains("header") || !obj["header"].is_array() || obj["header"].empty()) {
    throw EmptyTableError();
  }
  std::vector<std::string> header;
  for (const auto& h : obj["header"]) {
    header.emplace_back(util::trim(cell_from_json(h)));
  }
  std::vector<std::vector<Cell>> rows;
  if (obj.contains("rows")) {
    if (!obj["rows"].is_array()) throw DecodeError("rows must be an array");
    for (const auto& row : obj["rows"]) {
      if (!row.is_array()) throw DecodeError("each row must be an array");
      std::vector<Cell> cells;
      for (const auto& v : row) cells.emplace_back(cell_from_json(v));
      rows.push_back(std::move(cells));
    }
  }
  std::optional<std::string> caption;
  if (obj.contains("caption") && !obj["caption"].is_null()) {
    caption = normalize_cell_text(obj["caption"].get<std::string>());
  }
  std::string id = fallback_id;
  if (obj.contains("id") && obj["id"].is_string()) id = obj["id"].get<std::string>();
  return Table(std::move(header), std::move(rows), std::move(caption), std::move(id));
}

json parse_json(std::string_view text) {
  if (!is_valid_utf8(text)) throw DecodeError("input is not valid UTF-8");
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DecodeError(e.what());
  }
}

// RFC 4180 records. Quoted fields may hold delimiters, quotes ("") and line
// breaks; CRLF and LF both end a record.
std::vector<std::vector<std::string>> split_delimited(std::string_view src, char delim) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  const auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  const auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  while (i < src.size()) {
    const char c = src[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < src.size() && src[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
      } else {
        field.push_back(c);
      }
      ++i;
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == delim) {
      end_field();
    } else if (c == '\r' && i + 1 < src.size() && src[i + 1] == '\n') {
      end_record();
      ++i;
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
    ++i;
  }
  if (in_quotes) throw DecodeError("unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

}  // namespace

Table parse_table(std::string_view source, TableFormat format, const DelimitedOptions& delimited) {
  if (util::trim(source).empty()) throw EmptyTableError("empty table source");
  if (!is_valid_utf8(source)) throw DecodeError("input is not valid UTF-8");

  if (format == TableFormat::Interchange) {
    return table_from_json(parse_json(source), delimited.table_id);
  }

  auto records = split_delimited(source, delimited.delimiter);
  if (records.empty()) throw EmptyTableError("empty table source");
  std::vector<std::string> header;
  for (auto& h : records.front()) header.emplace_back(util::trim(normalize_cell_text(h)));
  std::vector<std::vector<Cell>> rows;
  rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      throw RaggedRowError(r - 1, records[r].size(), header.size());
    }
    std::vector<Cell> cells;
    cells.reserve(records[r].size());
    for (auto& f : records[r]) cells.emplace_back(normalize_cell_text(f));
    rows.push_back(std::move(cells));
  }
  return Table(std::move(header), std::move(rows), std::nullopt, delimited.table_id);
}

namespace {

Instance instance_from_json(const json& obj) {
  if (!obj.is_object()) throw DecodeError("instance must be an object");
  Instance inst{.id = {}, .table = Table({"_"}, {}), .question = {}, .gold_answers = {}};
  if (!obj.contains("id") || !obj["id"].is_string() || obj["id"].get<std::string>().empty()) {
    throw InvalidInstanceError("instance needs a non-empty string id");
  }
  inst.id = obj["id"].get<std::string>();
  if (!obj.contains("question") || !obj["question"].is_string()) {
    throw InvalidInstanceError(inst.id + ": missing question");
  }
  inst.question = normalize_cell_text(obj["question"].get<std::string>());
  if (obj.contains("task")) {
    auto task = parse_task_kind(obj["task"].get<std::string>());
    if (!task) throw InvalidInstanceError(inst.id + ": unknown task " + obj["task"].dump());
    inst.task = *task;
  }
  if (obj.contains("dataset") && obj["dataset"].is_string()) {
    inst.dataset = obj["dataset"].get<std::string>();
  }
  if (obj.contains("free_form") && obj["free_form"].is_boolean()) {
    inst.free_form = obj["free_form"].get<bool>();
  }
  if (!obj.contains("table")) throw InvalidInstanceError(inst.id + ": missing table");
  inst.table = table_from_json(obj["table"], inst.id);

  std::vector<std::string> raw_answers;
  if (obj.contains("answers")) {
    const auto& a = obj["answers"];
    if (a.is_array()) {
      for (const auto& v : a) raw_answers.push_back(cell_from_json(v));
    } else {
      raw_answers.push_back(cell_from_json(a));
    }
  }
  // Keep the first spelling of each normalized answer.
  std::vector<scoring::NormalizedAnswer> seen;
  for (auto& ans : raw_answers) {
    auto norm = scoring::normalize(ans, inst.task);
    if (norm.canonical.empty()) continue;
    bool dup = false;
    for (const auto& s : seen) dup = dup || scoring::answers_match(s, norm);
    if (dup) continue;
    if (inst.task == TaskKind::FactVerifyBinary && norm.canonical != "true" &&
        norm.canonical != "false") {
      throw InvalidInstanceError(inst.id + ": binary verification gold must be true/false");
    }
    if (inst.task == TaskKind::FactVerifyTernary && norm.canonical != "entail" &&
        norm.canonical != "contradict" && norm.canonical != "neutral") {
      throw InvalidInstanceError(inst.id +
                                 ": ternary verification gold must be entail/contradict/neutral");
    }
    seen.push_back(std::move(norm));
    inst.gold_answers.push_back(std::move(ans));
  }
  if (inst.gold_answers.empty()) throw InvalidInstanceError(inst.id + ": no gold answers");
  return inst;
}

}  // namespace

Instance parse_instance_json(std::string_view json_text) {
  return instance_from_json(parse_json(json_text));
}

std::vector<Instance> parse_instances(std::string_view text) {
  std::vector<Instance> out;
  std::string_view trimmed = util::trim(text);
  if (trimmed.empty()) return out;
  std::set<std::string> ids;
  const auto add = [&](Instance inst, std::size_t where) {
    if (!ids.insert(inst.id).second) {
      throw ParseError(where, "duplicate instance id " + inst.id);
    }
    out.push_back(std::move(inst));
  };
  if (trimmed.front() == '[') {
    const json arr = parse_json(trimmed);
    std::size_t index = 0;
    for (const auto& obj : arr) {
      ++index;
      try {
        add(instance_from_json(obj), index);
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(index, e.what());
      }
    }
    return out;
  }
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (util::trim(line).empty()) continue;
    try {
      add(parse_instance_json(line), line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::vector<Instance> load_instances(const std::string& path) {
  return parse_instances(util::read_file(path));
}

std::string instance_to_json(const Instance& instance) {
  nlohmann::ordered_json table;
  table["id"] = instance.table.id();
  table["header"] = instance.table.header();
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : instance.table.rows()) {
    auto r = nlohmann::ordered_json::array();
    for (const auto& c : row) r.push_back(c.text());
    rows.push_back(std::move(r));
  }
  table["rows"] = std::move(rows);
  if (instance.table.caption()) table["caption"] = *instance.table.caption();

  nlohmann::ordered_json obj;
  obj["id"] = instance.id;
  obj["dataset"] = instance.dataset;
  obj["task"] = std::string(to_string(instance.task));
  obj["question"] = instance.question;
  obj["answers"] = instance.gold_answers;
  if (instance.free_form) obj["free_form"] = true;
  obj["table"] = std::move(table);
  return obj.dump();
}

}  // namespace tabdpo
