#include <nlohmann/json.hpp>

#include <set>

#include "tabdpo/cli.hpp"
#include "tabdpo/errors.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<std::string_view> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw ConfigError(prefix + key, "unknown field");
  }
}

const json& object_at(const json& parent, const std::string& key, const std::string& field) {
  const json& v = parent.at(key);
  if (!v.is_object()) throw ConfigError(field, "expected an object");
  return v;
}

std::string get_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError(field, "expected a string");
  return v.get<std::string>();
}

long long get_int(const json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
  return v.get<long long>();
}

std::uint64_t get_seed(const json& v, const std::string& field) {
  if (!v.is_number_unsigned()) throw ConfigError(field, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

double get_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) throw ConfigError(field, "expected true or false");
  return v.get<bool>();
}

Rgb get_rgb(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(field, "expected [r, g, b]");
  std::uint8_t c[3];
  for (int i = 0; i < 3; ++i) {
    const auto x = get_int(v[i], field);
    if (x < 0 || x > 255) throw ConfigError(field, "channel out of range 0..255");
    c[i] = static_cast<std::uint8_t>(x);
  }
  return {c[0], c[1], c[2]};
}

int to_int(long long v, const std::string& field) {
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(field, "out of range");
  return static_cast<int>(v);
}

void parse_style(const json& s, ImageStyle& style, std::optional<std::uint64_t>& style_seed) {
  reject_unknown(s, "style.",
                 {"cell_padding_px", "font_size_px", "grid_line_width_px", "header_background",
                  "body_background", "text_color", "grid_color", "max_width_px", "wrap_chars",
                  "max_lines", "randomize_seed"});
  const auto int_field = [&](const char* key, int& dst) {
    if (s.contains(key)) dst = to_int(get_int(s[key], std::string("style.") + key), key);
  };
  int_field("cell_padding_px", style.cell_padding_px);
  int_field("font_size_px", style.font_size_px);
  int_field("grid_line_width_px", style.grid_line_width_px);
  int_field("max_width_px", style.max_width_px);
  int_field("wrap_chars", style.wrap_chars);
  int_field("max_lines", style.max_lines);
  const auto color = [&](const char* key, Rgb& dst) {
    if (s.contains(key)) dst = get_rgb(s[key], std::string("style.") + key);
  };
  color("header_background", style.header_background);
  color("body_background", style.body_background);
  color("text_color", style.text_color);
  color("grid_color", style.grid_color);
  if (s.contains("randomize_seed")) style_seed = get_seed(s["randomize_seed"], "style.randomize_seed");
}

ordered_json rgb_json(const Rgb& c) { return {c.r, c.g, c.b}; }

}  // namespace

fs::path RunConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return workspace / p;
}

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", e.what());
  }
  if (!j.is_object()) throw ConfigError("<document>", "expected a JSON object");
  reject_unknown(j, "",
                 {"workspace", "instances", "output_root", "model", "sampling", "strategy",
                  "text_format", "style", "templates", "parallelism", "max_error_rate"});

  RunConfig c;
  if (j.contains("workspace")) c.workspace = get_string(j["workspace"], "workspace");
  if (j.contains("instances")) c.instances = get_string(j["instances"], "instances");
  if (j.contains("output_root")) c.output_root = get_string(j["output_root"], "output_root");

  if (j.contains("model")) {
    const json& m = object_at(j, "model", "model");
    reject_unknown(m, "model.",
                   {"mock_profile", "endpoint_url", "model_name", "api_key_env", "parallelism",
                    "max_attempts", "initial_backoff_ms", "timeout_s", "batch_samples"});
    if (m.contains("mock_profile")) {
      const json& p = m["mock_profile"];
      if (p.is_string()) {
        c.mock_profile_path = p.get<std::string>();
      } else if (p.is_object()) {
        c.mock_profile_json = p.dump();
      } else {
        throw ConfigError("model.mock_profile", "expected a path or an inline object");
      }
    }
    if (m.contains("endpoint_url")) {
      EndpointConfig e;
      e.endpoint_url = get_string(m["endpoint_url"], "model.endpoint_url");
      if (m.contains("model_name")) e.model_name = get_string(m["model_name"], "model.model_name");
      if (m.contains("api_key_env")) {
        e.api_key_env = get_string(m["api_key_env"], "model.api_key_env");
      }
      if (m.contains("parallelism")) {
        e.parallelism = to_int(get_int(m["parallelism"], "model.parallelism"), "model.parallelism");
      }
      if (m.contains("max_attempts")) {
        e.max_attempts =
            to_int(get_int(m["max_attempts"], "model.max_attempts"), "model.max_attempts");
      }
      if (m.contains("initial_backoff_ms")) {
        e.initial_backoff =
            std::chrono::milliseconds(get_int(m["initial_backoff_ms"], "model.initial_backoff_ms"));
      }
      if (m.contains("timeout_s")) {
        e.timeout = std::chrono::seconds(get_int(m["timeout_s"], "model.timeout_s"));
      }
      if (m.contains("batch_samples")) {
        e.batch_samples = get_bool(m["batch_samples"], "model.batch_samples");
      }
      c.endpoint = std::move(e);
    }
  }

  if (j.contains("sampling")) {
    const json& s = object_at(j, "sampling", "sampling");
    reject_unknown(s, "sampling.", {"k", "temperature", "max_tokens", "seed"});
    if (s.contains("k")) c.sampling.samples_per_modality = to_int(get_int(s["k"], "sampling.k"), "sampling.k");
    if (s.contains("temperature")) {
      c.sampling.temperature = get_number(s["temperature"], "sampling.temperature");
    }
    if (s.contains("max_tokens")) {
      c.sampling.max_tokens =
          to_int(get_int(s["max_tokens"], "sampling.max_tokens"), "sampling.max_tokens");
    }
    if (s.contains("seed")) c.sampling.seed = get_seed(s["seed"], "sampling.seed");
  }

  if (j.contains("strategy")) {
    const json& s = j["strategy"];
    if (s.is_string()) {
      const auto kind = parse_strategy_kind(s.get<std::string>());
      if (!kind) throw ConfigError("strategy", "unknown strategy " + s.dump());
      c.strategy.kind = *kind;
    } else {
      if (!s.is_object()) throw ConfigError("strategy", "expected a string or an object");
      reject_unknown(s, "strategy.", {"kind", "seed", "pooling"});
      if (s.contains("kind")) {
        const auto kind = parse_strategy_kind(get_string(s["kind"], "strategy.kind"));
        if (!kind) throw ConfigError("strategy.kind", "unknown strategy " + s["kind"].dump());
        c.strategy.kind = *kind;
      }
      if (s.contains("seed")) c.strategy.seed = get_seed(s["seed"], "strategy.seed");
      if (s.contains("pooling")) {
        const auto p = get_string(s["pooling"], "strategy.pooling");
        if (p == "pooled") {
          c.pooling = NegativePooling::Pooled;
        } else if (p == "per-modality") {
          c.pooling = NegativePooling::PerModality;
        } else {
          throw ConfigError("strategy.pooling", "expected \"pooled\" or \"per-modality\"");
        }
      }
    }
  }

  if (j.contains("text_format")) {
    const auto f = parse_text_format(get_string(j["text_format"], "text_format"));
    if (!f) throw ConfigError("text_format", "expected markdown, dict or list");
    c.text_format = *f;
  }
  if (j.contains("style")) parse_style(object_at(j, "style", "style"), c.style, c.style_seed);
  if (j.contains("templates")) {
    for (const auto& [task_name, path] : object_at(j, "templates", "templates").items()) {
      const auto task = parse_task_kind(task_name);
      if (!task) throw ConfigError("templates." + task_name, "unknown task");
      c.template_paths[*task] = get_string(path, "templates." + task_name);
    }
  }
  if (j.contains("parallelism")) {
    c.parallelism = to_int(get_int(j["parallelism"], "parallelism"), "parallelism");
  }
  if (j.contains("max_error_rate")) {
    c.max_error_rate = get_number(j["max_error_rate"], "max_error_rate");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = util::read_file(path.string());
  } catch (const IoError& e) {
    throw ConfigError("<file>", e.what());
  }
  RunConfig c = parse_run_config(text);
  // A relative workspace is taken relative to the config file.
  if (c.workspace.is_relative()) c.workspace = path.parent_path() / c.workspace;
  return c;
}

void RunConfig::validate() const {
  if (instances.empty()) throw ConfigError("instances", "required");
  const int models = (mock_profile_json || mock_profile_path ? 1 : 0) + (endpoint ? 1 : 0);
  if (models != 1) {
    throw ConfigError("model", "set exactly one of model.mock_profile or model.endpoint_url");
  }
  if (endpoint) endpoint->validate();
  if ((mock_profile_json || mock_profile_path) && !sampling.seed) {
    throw ConfigError("sampling.seed", "required when sampling from a mock profile");
  }
  sampling.validate();
  strategy.validate();
  style.validate();
  if (parallelism < 1) throw ConfigError("parallelism", "must be at least 1");
  if (!(max_error_rate >= 0.0 && max_error_rate <= 1.0)) {
    throw ConfigError("max_error_rate", "must be within [0, 1]");
  }
}

std::string RunConfig::canonical_json() const {
  ordered_json j;
  ordered_json model;
  if (endpoint) {
    model["endpoint_url"] = endpoint->endpoint_url;
    model["model_name"] = endpoint->model_name;
    model["batch_samples"] = endpoint->batch_samples;
    model["max_attempts"] = endpoint->max_attempts;
  } else if (mock_profile_json) {
    model["mock_profile"] = ordered_json::parse(*mock_profile_json);
  } else if (mock_profile_path) {
    model["mock_profile"] = ordered_json::parse(util::read_file(resolve(*mock_profile_path).string()));
  }
  j["model"] = std::move(model);
  ordered_json sampling_j;
  sampling_j["k"] = sampling.samples_per_modality;
  sampling_j["temperature"] = sampling.temperature;
  sampling_j["max_tokens"] = sampling.max_tokens;
  if (sampling.seed) sampling_j["seed"] = *sampling.seed;
  j["sampling"] = std::move(sampling_j);
  ordered_json strategy_j;
  strategy_j["kind"] = std::string(to_string(strategy.kind));
  if (strategy.seed) strategy_j["seed"] = *strategy.seed;
  strategy_j["pooling"] = pooling == NegativePooling::Pooled ? "pooled" : "per-modality";
  j["strategy"] = std::move(strategy_j);
  j["text_format"] = std::string(to_string(text_format));
  ordered_json style_j;
  style_j["cell_padding_px"] = style.cell_padding_px;
  style_j["font_size_px"] = style.font_size_px;
  style_j["grid_line_width_px"] = style.grid_line_width_px;
  style_j["header_background"] = rgb_json(style.header_background);
  style_j["body_background"] = rgb_json(style.body_background);
  style_j["text_color"] = rgb_json(style.text_color);
  style_j["grid_color"] = rgb_json(style.grid_color);
  style_j["max_width_px"] = style.max_width_px;
  style_j["wrap_chars"] = style.wrap_chars;
  style_j["max_lines"] = style.max_lines;
  if (style_seed) style_j["randomize_seed"] = *style_seed;
  j["style"] = std::move(style_j);
  ordered_json templates = ordered_json::object();
  for (const auto& [task, path] : template_paths) {
    templates[std::string(to_string(task))] = util::read_file(resolve(path).string());
  }
  j["templates"] = std::move(templates);
  j["max_error_rate"] = max_error_rate;
  return j.dump();
}

PromptTemplate load_template(const fs::path& path, TaskKind task) {
  json j;
  try {
    j = json::parse(util::read_file(path.string()));
  } catch (const json::parse_error& e) {
    throw ConfigError("templates." + std::string(to_string(task)), e.what());
  } catch (const IoError& e) {
    throw ConfigError("templates." + std::string(to_string(task)), e.what());
  }
  const std::string field = "templates." + std::string(to_string(task));
  if (!j.is_object()) throw ConfigError(field, "expected a JSON object");
  reject_unknown(j, field + ".", {"preamble", "body", "answer_anchor", "include_shape"});
  PromptTemplate t = default_template(task);
  if (j.contains("preamble")) t.preamble = get_string(j["preamble"], field + ".preamble");
  if (!j.contains("body")) throw ConfigError(field + ".body", "required");
  t.body = get_string(j["body"], field + ".body");
  if (j.contains("answer_anchor")) {
    t.answer_anchor = get_string(j["answer_anchor"], field + ".answer_anchor");
  }
  if (j.contains("include_shape")) {
    t.include_shape = get_bool(j["include_shape"], field + ".include_shape");
  }
  if (t.body.find("{question}") == std::string::npos) {
    throw ConfigError(field + ".body", "must contain {question}");
  }
  return t;
}

TemplateSet build_templates(const RunConfig& config) {
  TemplateSet set;
  for (const auto& [task, path] : config.template_paths) {
    set.set(load_template(config.resolve(path), task));
  }
  return set;
}

std::unique_ptr<ModelHandle> make_model(const RunConfig& config) {
  if (config.endpoint) return std::make_unique<RemoteModel>(*config.endpoint);
  std::string profile_text;
  if (config.mock_profile_json) {
    profile_text = *config.mock_profile_json;
  } else if (config.mock_profile_path) {
    profile_text = util::read_file(config.resolve(*config.mock_profile_path).string());
  } else {
    throw ConfigError("model", "no model configured");
  }
  return mock_sampler(MockProfile::from_json(profile_text), config.sampling.seed.value_or(0));
}

std::string compute_run_id(const RunConfig& config) {
  std::string material = config.canonical_json();
  material += "\n";
  material += util::sha256_hex(util::read_file(config.resolve(config.instances).string()));
  return util::sha256_hex(material).substr(0, 12);
}

}  // namespace tabdpo::cli
