#pragma once

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tabdpo/image_render.hpp"
#include "tabdpo/model_client.hpp"
#include "tabdpo/pair_builder.hpp"
#include "tabdpo/text_render.hpp"

namespace tabdpo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Effective configuration of a pair-building or sampling run. Loaded from a
// JSON document; command-line flags override individual fields afterwards.
// Relative paths resolve against `workspace`.
struct RunConfig {
  std::filesystem::path workspace = ".";
  std::filesystem::path instances;
  std::filesystem::path output_root = "runs";

  // Exactly one of these is set.
  std::optional<std::string> mock_profile_json;
  std::optional<std::filesystem::path> mock_profile_path;
  std::optional<EndpointConfig> endpoint;

  SamplingConfig sampling;
  SelectionStrategy strategy;
  NegativePooling pooling = NegativePooling::Pooled;
  TextFormat text_format = TextFormat::Markdown;
  ImageStyle style;
  std::optional<std::uint64_t> style_seed;
  std::map<TaskKind, std::filesystem::path> template_paths;
  int parallelism = 8;
  double max_error_rate = 0.10;

  std::filesystem::path resolve(const std::filesystem::path& p) const;

  // Throws ConfigError naming the offending field.
  void validate() const;

  // Canonical JSON of every field that influences outputs.
  std::string canonical_json() const;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Loads `{preamble, body, answer_anchor, include_shape}` for one task.
PromptTemplate load_template(const std::filesystem::path& path, TaskKind task);
TemplateSet build_templates(const RunConfig& config);

std::unique_ptr<ModelHandle> make_model(const RunConfig& config);

// Deterministic run id: hash of the canonical config and every input.
std::string compute_run_id(const RunConfig& config);

// --- subcommands ------------------------------------------------------------

struct RenderArgs {
  std::filesystem::path instances;
  std::filesystem::path out_dir;
  std::optional<TextFormat> text_format;
  bool image = false;
  ImageStyle style;
  std::optional<std::uint64_t> style_seed;
  bool force = false;
};

struct SampleArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::vector<Modality> modalities;
  std::optional<int> k;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

struct BuildPairsArgs {
  std::filesystem::path config;
  std::optional<std::filesystem::path> workspace;
  std::optional<int> k;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<std::uint64_t> strategy_seed;
  std::optional<int> parallelism;
  bool force = false;
  const std::atomic<bool>* cancel = nullptr;
};

struct PredictionSource {
  std::filesystem::path path;
  std::string tag;  // modality label; defaults to the file stem
};

struct EvalArgs {
  std::filesystem::path instances;
  std::vector<PredictionSource> predictions;
  std::filesystem::path out_dir;
  bool bleu = false;
  std::string anchor = "Final Answer:";
  bool force = false;
};

struct DpoCheckArgs {
  std::filesystem::path points;
  double beta = 0.1;
  double step = 1e-6;
  double tolerance = 1e-6;
  std::optional<std::filesystem::path> report;
};

struct StatsArgs {
  std::optional<std::filesystem::path> run_dir;
  std::optional<std::filesystem::path> instances;
};

// Each returns a process exit code. Progress and diagnostics go to `err`;
// human-readable summaries to `out`; machine-readable results to files.
int cmd_render(const RenderArgs& args, std::ostream& out, std::ostream& err);
int cmd_sample(const SampleArgs& args, std::ostream& out, std::ostream& err);
// On success `run_dir` (if given) receives the run directory.
int cmd_build_pairs(const BuildPairsArgs& args, std::ostream& out, std::ostream& err,
                    std::filesystem::path* run_dir = nullptr);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_dpo_check(const DpoCheckArgs& args, std::ostream& out, std::ostream& err);
int cmd_stats(const StatsArgs& args, std::ostream& out, std::ostream& err);

// Full argv entry point (CLI11 parsing + dispatch).
int run(int argc, char** argv, const std::atomic<bool>* cancel = nullptr);

}  // namespace tabdpo::cli
