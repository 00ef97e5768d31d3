#include <CLI11.hpp>

#include <iostream>

#include "tabdpo/cli.hpp"
#include "tabdpo/dataset_io.hpp"

namespace tabdpo::cli {

namespace {

void add_style_flags(CLI::App* cmd, ImageStyle& style, std::optional<std::uint64_t>& seed) {
  cmd->add_option("--cell-padding", style.cell_padding_px, "Cell padding in pixels");
  cmd->add_option("--font-size", style.font_size_px, "Font size in pixels");
  cmd->add_option("--grid-width", style.grid_line_width_px, "Grid line width in pixels");
  cmd->add_option("--max-width", style.max_width_px, "Maximum image width in pixels");
  cmd->add_option("--wrap-chars", style.wrap_chars, "Characters per wrapped cell line");
  cmd->add_option("--max-lines", style.max_lines, "Lines per cell before truncation");
  cmd->add_option("--style-seed", seed, "Randomize colors and padding from this seed");
}

const std::map<std::string, TextFormat> kFormats = {
    {"markdown", TextFormat::Markdown}, {"dict", TextFormat::DictOfLists}, {"list", TextFormat::ListOfRows}};

}  // namespace

int run(int argc, char** argv, const std::atomic<bool>* cancel) {
  CLI::App app{"Table preference-pair toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(io::kToolVersion));

  RenderArgs render;
  std::string render_format;
  auto* render_cmd = app.add_subcommand("render", "Render instance tables as text and/or PNG");
  render_cmd->add_option("--instances", render.instances, "Instances file (JSON or JSONL)")->required();
  render_cmd->add_option("--out", render.out_dir, "Output directory")->required();
  render_cmd->add_option("--text", render_format, "Text format: markdown, dict or list")
      ->check(CLI::IsMember({"markdown", "dict", "list"}));
  render_cmd->add_flag("--image", render.image, "Also write PNG screenshots");
  render_cmd->add_flag("--force", render.force, "Overwrite a completed render");
  add_style_flags(render_cmd, render.style, render.style_seed);

  SampleArgs sample;
  std::vector<std::string> sample_modalities;
  auto* sample_cmd = app.add_subcommand("sample", "Draw K responses per instance and modality");
  sample_cmd->add_option("--config", sample.config, "Run configuration (JSON)")->required();
  sample_cmd->add_option("--out", sample.out, "Output directory")->required();
  sample_cmd->add_option("--modality", sample_modalities, "text, image and/or hybrid")
      ->check(CLI::IsMember({"text", "image", "hybrid"}));
  sample_cmd->add_option("-k,--samples", sample.k, "Samples per modality");
  sample_cmd->add_option("--seed", sample.seed, "Sampling seed");
  sample_cmd->add_flag("--force", sample.force, "Overwrite existing prediction files");

  BuildPairsArgs build;
  build.cancel = cancel;
  auto* build_cmd = app.add_subcommand("build-pairs", "Build the preference-pair dataset");
  build_cmd->add_option("--config", build.config, "Run configuration (JSON)")->required();
  build_cmd->add_option("--workspace", build.workspace, "Workspace root");
  build_cmd->add_option("-k,--samples", build.k, "Samples per modality");
  build_cmd->add_option("--seed", build.seed, "Sampling seed");
  build_cmd->add_option("--strategy", build.strategy,
                        "modality-consistent, random or multimodal-only");
  build_cmd->add_option("--strategy-seed", build.strategy_seed, "Seed for the random strategy");
  build_cmd->add_option("-j,--parallelism", build.parallelism, "Instances in flight");
  build_cmd->add_flag("--force", build.force, "Rebuild a completed run");

  EvalArgs eval;
  std::vector<std::string> eval_predictions;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold answers");
  eval_cmd->add_option("--instances", eval.instances, "Instances file")->required();
  eval_cmd->add_option("--predictions", eval_predictions,
                       "Prediction JSONL, optionally TAG=PATH; repeat for several modalities")
      ->required();
  eval_cmd->add_option("--out", eval.out_dir, "Report directory")->required();
  eval_cmd->add_flag("--bleu", eval.bleu, "Also report BLEU-4");
  eval_cmd->add_option("--anchor", eval.anchor, "Answer anchor for raw completions");
  eval_cmd->add_flag("--force", eval.force, "Overwrite an existing report");

  DpoCheckArgs dpo;
  std::string dpo_report;
  auto* dpo_cmd = app.add_subcommand("dpo-check", "Check the DPO loss and gradient on a batch");
  dpo_cmd->add_option("--points", dpo.points, "Log-probability JSONL")->required();
  dpo_cmd->add_option("--beta", dpo.beta, "Temperature beta");
  dpo_cmd->add_option("--step", dpo.step, "Central-difference step");
  dpo_cmd->add_option("--tolerance", dpo.tolerance, "Relative error tolerance");
  dpo_cmd->add_option("--report", dpo_report, "Write a JSON report here");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Summarize a run directory or instance file");
  stats_cmd->add_option("--run", stats.run_dir, "Run directory");
  stats_cmd->add_option("--instances", stats.instances, "Instances file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
  if (render_cmd->parsed()) {
    if (!render_format.empty()) render.text_format = kFormats.at(render_format);
    return cmd_render(render, out, err);
  }
  if (sample_cmd->parsed()) {
    for (const auto& m : sample_modalities) sample.modalities.push_back(*parse_modality(m));
    return cmd_sample(sample, out, err);
  }
  if (build_cmd->parsed()) return cmd_build_pairs(build, out, err);
  if (eval_cmd->parsed()) {
    for (const auto& spec : eval_predictions) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) {
        eval.predictions.push_back({spec, {}});
      } else {
        eval.predictions.push_back({spec.substr(eq + 1), spec.substr(0, eq)});
      }
    }
    return cmd_eval(eval, out, err);
  }
  if (dpo_cmd->parsed()) {
    if (!dpo_report.empty()) dpo.report = dpo_report;
    return cmd_dpo_check(dpo, out, err);
  }
  if (stats_cmd->parsed()) return cmd_stats(stats, out, err);
  return kExitUsage;
}

}  // namespace tabdpo::cli
