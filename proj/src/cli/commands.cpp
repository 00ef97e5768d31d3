#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "tabdpo/cli.hpp"
#include "tabdpo/dataset_io.hpp"
#include "tabdpo/dpo.hpp"
#include "tabdpo/errors.hpp"
#include "tabdpo/scoring.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string safe_name(std::string_view id) {
  std::string out = id.empty() ? std::string("table") : std::string(id);
  for (auto& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  if (out.front() == '.') out.front() = '_';
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  util::write_file(path.string(),
                   std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

bool completed_run(const fs::path& run_dir) {
  const fs::path stats = run_dir / "stats.json";
  if (!fs::exists(stats)) return false;
  try {
    const json j = json::parse(util::read_file(stats.string()));
    return j.value("complete", false);
  } catch (const std::exception&) {
    return false;
  }
}

ImageStyle effective_style(const ImageStyle& style, const std::optional<std::uint64_t>& seed) {
  return seed ? randomized_style(style, *seed) : style;
}

}  // namespace

// --- render -----------------------------------------------------------------

int cmd_render(const RenderArgs& args, std::ostream& out, std::ostream& err) {
  if (!args.text_format && !args.image) {
    err << "render: nothing to do; pass --text FORMAT and/or --image\n";
    return kExitUsage;
  }
  const fs::path marker = args.out_dir / ".complete";
  if (fs::exists(marker) && !args.force) {
    err << "render: " << args.out_dir.string() << " already holds a completed render; use --force\n";
    return kExitUsage;
  }
  ImageStyle style;
  try {
    style = effective_style(args.style, args.style_seed);
    style.validate();
  } catch (const ConfigError& e) {
    err << "render: " << e.what() << "\n";
    return kExitUsage;
  }

  std::vector<Instance> instances;
  try {
    instances = load_instances(args.instances.string());
  } catch (const Error& e) {
    err << "render: " << args.instances.string() << ": " << e.what() << "\n";
    return kExitFailure;
  }
  ensure_dir(args.out_dir);

  long text_files = 0, images = 0;
  std::vector<std::string> failures;
  for (const auto& inst : instances) {
    try {
      if (args.text_format) {
        const auto r = render_text(inst.table, *args.text_format);
        util::write_file(
            (args.out_dir / (safe_name(inst.id) + std::string(file_extension(*args.text_format))))
                .string(),
            r.text);
        ++text_files;
      }
      if (args.image) {
        const auto img = render_image(inst.table.with_id(inst.id), style);
        write_bytes(args.out_dir / img.file_name(), img.encoded);
        ++images;
      }
    } catch (const Error& e) {
      failures.push_back(inst.id + ": " + e.what());
    }
  }
  for (const auto& f : failures) err << "render: " << f << "\n";
  out << "rendered " << instances.size() - failures.size() << "/" << instances.size()
      << " instances (" << text_files << " text, " << images << " images)\n";
  if (!failures.empty()) return kExitFailure;
  util::write_file(marker.string(), "");
  return kExitOk;
}

// --- sample -----------------------------------------------------------------

int cmd_sample(const SampleArgs& args, std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = load_run_config(args.config);
    if (args.k) config.sampling.samples_per_modality = *args.k;
    if (args.seed) config.sampling.seed = *args.seed;
    config.validate();
  } catch (const ConfigError& e) {
    err << "sample: " << e.what() << "\n";
    return kExitUsage;
  }
  const std::vector<Modality> modalities =
      args.modalities.empty()
          ? std::vector<Modality>(std::begin(kAllModalities), std::end(kAllModalities))
          : args.modalities;
  for (auto m : modalities) {
    const fs::path p = args.out / (std::string(to_string(m)) + ".jsonl");
    if (fs::exists(p) && !args.force) {
      err << "sample: " << p.string() << " exists; use --force\n";
      return kExitUsage;
    }
  }

  try {
    const auto instances = load_instances(config.resolve(config.instances).string());
    const TemplateSet templates = build_templates(config);
    auto model = make_model(config);
    RenderOptions render;
    render.text_format = config.text_format;
    render.style = effective_style(config.style, config.style_seed);
    ensure_dir(args.out);

    std::map<Modality, std::string> buffers;
    long errors = 0;
    for (const auto& inst : instances) {
      Renderings r;
      try {
        r = render_for_sampling(inst, config.strategy, render);
      } catch (const Error& e) {
        err << "sample: " << inst.id << ": " << e.what() << "\n";
        ++errors;
        continue;
      }
      for (auto m : modalities) {
        try {
          const auto responses = sample(inst, m, &r.text, r.image ? &*r.image : nullptr,
                                        config.sampling, templates, *model);
          ordered_json line;
          line["instance_id"] = inst.id;
          line["modality"] = std::string(to_string(m));
          ordered_json preds = ordered_json::array(), raw = ordered_json::array();
          for (const auto& resp : responses) {
            preds.push_back(resp.extracted_answer);
            raw.push_back(resp.raw_text);
          }
          line["predictions"] = std::move(preds);
          line["raw"] = std::move(raw);
          buffers[m] += line.dump() + "\n";
        } catch (const Error& e) {
          err << "sample: " << inst.id << "/" << to_string(m) << ": " << e.what() << "\n";
          ++errors;
        }
      }
    }
    for (auto m : modalities) {
      util::write_file((args.out / (std::string(to_string(m)) + ".jsonl")).string(), buffers[m]);
    }
    out << "sampled " << instances.size() << " instances x " << modalities.size()
        << " modalities, " << errors << " errors\n";
    return errors == 0 ? kExitOk : kExitFailure;
  } catch (const ConfigError& e) {
    err << "sample: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "sample: " << e.what() << "\n";
    return kExitFailure;
  }
}

// --- build-pairs ------------------------------------------------------------

int cmd_build_pairs(const BuildPairsArgs& args, std::ostream& out, std::ostream& err,
                    fs::path* run_dir_out) {
  RunConfig config;
  std::string run_id;
  try {
    config = load_run_config(args.config);
    if (args.workspace) config.workspace = *args.workspace;
    if (args.k) config.sampling.samples_per_modality = *args.k;
    if (args.seed) config.sampling.seed = *args.seed;
    if (args.strategy) {
      const auto kind = parse_strategy_kind(*args.strategy);
      if (!kind) throw ConfigError("strategy", "unknown strategy '" + *args.strategy + "'");
      config.strategy.kind = *kind;
    }
    if (args.strategy_seed) config.strategy.seed = *args.strategy_seed;
    if (args.parallelism) config.parallelism = *args.parallelism;
    config.validate();
    run_id = compute_run_id(config);
  } catch (const ConfigError& e) {
    err << "build-pairs: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "build-pairs: " << e.what() << "\n";
    return kExitFailure;
  }

  const fs::path run_dir = config.resolve(config.output_root) / run_id;
  if (completed_run(run_dir) && !args.force) {
    err << "build-pairs: run " << run_id << " is already complete at " << run_dir.string()
        << "; use --force to rebuild\n";
    return kExitUsage;
  }

  try {
    const fs::path instances_path = config.resolve(config.instances);
    const auto instances = load_instances(instances_path.string());
    BuildOptions options;
    options.templates = build_templates(config);
    options.render.text_format = config.text_format;
    options.render.style = effective_style(config.style, config.style_seed);
    options.pooling = config.pooling;
    options.parallelism = config.parallelism;
    options.max_error_rate = config.max_error_rate;
    options.cancel = args.cancel;
    auto model = make_model(config);

    std::error_code ec;
    fs::remove_all(run_dir, ec);
    io::PairWriter writer(run_dir, run_id);
    io::RunManifest manifest;
    manifest.run_id = run_id;
    manifest.config_json = config.canonical_json();
    manifest.input_checksums[config.instances.string()] =
        util::sha256_hex(util::read_file(instances_path.string()));
    for (const auto& [task, path] : config.template_paths) {
      manifest.input_checksums[path.string()] =
          util::sha256_hex(util::read_file(config.resolve(path).string()));
    }
    manifest.model = model->describe();
    manifest.started_at = io::utc_timestamp();

    err << "build-pairs: run " << run_id << ", " << instances.size() << " instances\n";
    const BuildStats stats =
        build_dataset(instances, config.strategy, config.sampling, *model, options,
                      [&](const BuildItem& item) { writer.write(item); });
    writer.finish();
    manifest.finished_at = io::utc_timestamp();
    util::write_file((run_dir / "manifest.json").string(), manifest.to_json());
    const bool complete = stats.cancelled == 0 && !stats.threshold_exceeded;
    util::write_file((run_dir / "stats.json").string(), io::stats_to_json(stats, complete));

    for (const auto& e : stats.errors) err << "build-pairs: " << e.instance_id << ": " << e.message << "\n";
    err << "build-pairs: " << stats.retained << " pairs from " << stats.total << " instances ("
        << stats.dropped_no_correct << " no correct, " << stats.dropped_no_incorrect
        << " no incorrect, " << stats.skipped_free_form << " free-form, " << stats.errored
        << " errors, " << stats.cancelled << " cancelled)\n";
    out << run_dir.string() << "\n";
    if (run_dir_out) *run_dir_out = run_dir;
    if (stats.threshold_exceeded) {
      err << "build-pairs: error rate " << fixed(stats.error_rate(), 4) << " exceeds "
          << fixed(config.max_error_rate, 4) << "\n";
      return kExitFailure;
    }
    return stats.cancelled == 0 ? kExitOk : kExitFailure;
  } catch (const ConfigError& e) {
    err << "build-pairs: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "build-pairs: " << e.what() << "\n";
    return kExitFailure;
  }
}

// --- eval -------------------------------------------------------------------

namespace {

struct PredictionLine {
  std::string instance_id;
  std::vector<std::string> answers;
};

std::vector<PredictionLine> load_predictions(const fs::path& path, std::string_view anchor) {
  const std::string text = util::read_file(path.string());
  std::vector<PredictionLine> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw ParseError(line_no, "not valid JSON");
    }
    if (!j.is_object() || !j.contains("instance_id") || !j["instance_id"].is_string()) {
      throw ParseError(line_no, "missing string field 'instance_id'");
    }
    PredictionLine p;
    p.instance_id = j["instance_id"].get<std::string>();
    const auto take = [&](const json& v, bool extract) {
      const auto one = [&](const json& s) {
        if (!s.is_string()) throw ParseError(line_no, "predictions must be strings");
        const auto str = s.get<std::string>();
        p.answers.push_back(extract ? scoring::extract_answer(str, anchor) : str);
      };
      if (v.is_array()) {
        for (const auto& s : v) one(s);
      } else {
        one(v);
      }
    };
    if (j.contains("predictions")) {
      take(j["predictions"], false);
    } else if (j.contains("prediction")) {
      take(j["prediction"], false);
    } else if (j.contains("raw")) {
      take(j["raw"], true);
    } else {
      throw ParseError(line_no, "expected 'prediction', 'predictions' or 'raw'");
    }
    if (p.answers.empty()) throw ParseError(line_no, "no predictions");
    out.push_back(std::move(p));
  }
  return out;
}

void add_row(std::string& tsv, const std::string& dataset, const std::string& modality,
             const std::string& metric, const std::string& value) {
  tsv += dataset + "\t" + modality + "\t" + metric + "\t" + value + "\n";
}

}  // namespace

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  if (args.predictions.empty()) {
    err << "eval: at least one --predictions file is required\n";
    return kExitUsage;
  }
  if (fs::exists(args.out_dir / "report.txt") && !args.force) {
    err << "eval: " << args.out_dir.string() << " already holds a report; use --force\n";
    return kExitUsage;
  }
  try {
    const auto instances = load_instances(args.instances.string());
    std::map<std::string, const Instance*> by_id;
    for (const auto& inst : instances) by_id[inst.id] = &inst;

    struct Source {
      std::string tag;
      std::map<std::string, std::vector<std::string>> answers;
    };
    std::vector<Source> sources;
    std::set<std::string> unknown;
    for (const auto& src : args.predictions) {
      Source s;
      s.tag = src.tag.empty() ? src.path.stem().string() : src.tag;
      try {
        for (auto& p : load_predictions(src.path, args.anchor)) {
          if (!by_id.count(p.instance_id)) {
            unknown.insert(p.instance_id);
            continue;
          }
          s.answers[p.instance_id] = std::move(p.answers);
        }
      } catch (const ParseError& e) {
        err << "eval: " << src.path.string() << ": " << e.what() << "\n";
        return kExitFailure;
      }
      sources.push_back(std::move(s));
    }
    if (!unknown.empty()) throw UnknownInstanceError({unknown.begin(), unknown.end()});

    std::vector<scoring::MetricReport> reports;
    std::string metrics = "dataset\tmodality\tmetric\tvalue\n";
    for (const auto& s : sources) {
      scoring::MetricReport rep;
      rep.modality = s.tag;
      double consistency_sum = 0.0, bleu_sum = 0.0;
      long multi = 0;
      scoring::BleuStats corpus;
      for (const auto& [id, answers] : s.answers) {
        const Instance& inst = *by_id.at(id);
        const int r = scoring::reward(answers.front(), inst);
        const auto bucket = size_bucket(token_count(inst.table));
        for (auto* cell : {&rep.per_dataset[inst.dataset], &rep.per_bucket[bucket], &rep.overall}) {
          cell->correct += r;
          cell->total += 1;
        }
        if (answers.size() > 1) {
          consistency_sum += scoring::consistency(std::span<const std::string>(answers), inst);
          ++multi;
        }
        if (args.bleu) {
          bleu_sum += scoring::bleu(answers.front(), inst.gold_answers);
          corpus += scoring::bleu_stats(answers.front(), inst.gold_answers);
        }
        ++rep.n_instances;
      }
      if (multi > 0) rep.mean_consistency = consistency_sum / multi;
      if (args.bleu && rep.n_instances > 0) {
        rep.bleu_sentence_avg = bleu_sum / rep.n_instances;
        rep.bleu_corpus = scoring::bleu_from_stats(corpus);
      }
      for (const auto& [dataset, cell] : rep.per_dataset) {
        add_row(metrics, dataset, s.tag, "accuracy", scoring::format_percent(cell.value()));
      }
      add_row(metrics, "all", s.tag, "accuracy", scoring::format_percent(rep.overall.value()));
      for (const auto& [bucket, cell] : rep.per_bucket) {
        add_row(metrics, "all", s.tag, "accuracy_" + std::string(to_string(bucket)),
                scoring::format_percent(cell.value()));
      }
      if (rep.bleu_sentence_avg) {
        add_row(metrics, "all", s.tag, "bleu_sentence", scoring::format_percent(*rep.bleu_sentence_avg));
        add_row(metrics, "all", s.tag, "bleu_corpus", scoring::format_percent(*rep.bleu_corpus));
      }
      if (rep.mean_consistency) {
        add_row(metrics, "all", s.tag, "consistency", fixed(*rep.mean_consistency, 2));
      }
      reports.push_back(std::move(rep));
    }

    std::string jaccard_tsv = "modality_a\tmodality_b\tmean_jaccard\tinstances\n";
    std::string jaccard_text;
    for (std::size_t a = 0; a < sources.size(); ++a) {
      for (std::size_t b = a + 1; b < sources.size(); ++b) {
        double sum = 0.0;
        long n = 0;
        for (const auto& [id, answers_a] : sources[a].answers) {
          const auto it = sources[b].answers.find(id);
          if (it == sources[b].answers.end()) continue;
          sum += scoring::jaccard(answers_a, it->second, by_id.at(id)->task);
          ++n;
        }
        if (n == 0) continue;
        const std::string v = fixed(sum / n, 2);
        jaccard_tsv += sources[a].tag + "\t" + sources[b].tag + "\t" + v + "\t" + std::to_string(n) + "\n";
        jaccard_text += "  " + sources[a].tag + " vs " + sources[b].tag + ": " + v + "\n";
      }
    }

    std::string report;
    for (const auto& rep : reports) {
      report += "[" + rep.modality + "] " + std::to_string(rep.n_instances) + " instances\n";
      report += "  accuracy " + scoring::format_percent(rep.overall.value()) + "\n";
      for (const auto& [dataset, cell] : rep.per_dataset) {
        report += "  " + dataset + " " + scoring::format_percent(cell.value()) + " (" +
                  std::to_string(cell.correct) + "/" + std::to_string(cell.total) + ")\n";
      }
      for (const auto& [bucket, cell] : rep.per_bucket) {
        report += "  " + std::string(to_string(bucket)) + " " +
                  scoring::format_percent(cell.value()) + " (" + std::to_string(cell.total) + ")\n";
      }
      if (rep.bleu_sentence_avg) {
        report += "  bleu sentence-avg " + scoring::format_percent(*rep.bleu_sentence_avg) +
                  ", corpus " + scoring::format_percent(*rep.bleu_corpus) + "\n";
      }
      if (rep.mean_consistency) report += "  consistency " + fixed(*rep.mean_consistency, 2) + "\n";
    }
    if (!jaccard_text.empty()) report += "jaccard\n" + jaccard_text;

    ensure_dir(args.out_dir);
    util::write_file((args.out_dir / "metrics.tsv").string(), metrics);
    if (sources.size() > 1) util::write_file((args.out_dir / "jaccard.tsv").string(), jaccard_tsv);
    util::write_file((args.out_dir / "report.txt").string(), report);
    out << report;
    return kExitOk;
  } catch (const Error& e) {
    err << "eval: " << e.what() << "\n";
    return kExitFailure;
  }
}

// --- dpo-check --------------------------------------------------------------

int cmd_dpo_check(const DpoCheckArgs& args, std::ostream& out, std::ostream& err) {
  dpo::Config cfg;
  cfg.beta = args.beta;
  if (!(args.beta > 0.0) || !std::isfinite(args.beta)) {
    err << "dpo-check: --beta must be a positive number\n";
    return kExitUsage;
  }
  if (!(args.step > 0.0) || !(args.tolerance > 0.0)) {
    err << "dpo-check: --step and --tolerance must be positive\n";
    return kExitUsage;
  }
  try {
    const auto points = dpo::parse_points(util::read_file(args.points.string()));
    const auto summary = dpo::batch(points, cfg);
    const auto check = dpo::check_gradients(points, cfg, args.step, args.tolerance);
    const bool pass = check.failures == 0;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "points %zu\nbeta %.6g\nmean_loss %.12f\nmean_scaled_margin %.12f\n"
                  "fraction_positive %.6f\ngradient_check %s (%ld/%ld coordinates, max relative "
                  "error %.3e)\n",
                  points.size(), cfg.beta, summary.mean_loss, summary.mean_scaled_margin,
                  summary.fraction_positive, pass ? "PASS" : "FAIL",
                  static_cast<long>(check.checked - check.failures), static_cast<long>(check.checked),
                  check.max_relative_error);
    out << buf;
    if (!pass) out << "worst pair " << check.worst_pair_id << "\n";
    if (args.report) {
      ordered_json j;
      j["points"] = points.size();
      j["beta"] = cfg.beta;
      j["mean_loss"] = summary.mean_loss;
      j["mean_scaled_margin"] = summary.mean_scaled_margin;
      j["fraction_positive"] = summary.fraction_positive;
      j["gradient_check"] = {{"pass", pass},
                             {"checked", check.checked},
                             {"failures", check.failures},
                             {"max_relative_error", check.max_relative_error},
                             {"worst_pair_id", check.worst_pair_id},
                             {"step", args.step},
                             {"tolerance", args.tolerance}};
      util::write_file(args.report->string(), j.dump(2) + "\n");
    }
    return pass ? kExitOk : kExitFailure;
  } catch (const Error& e) {
    err << "dpo-check: " << args.points.string() << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

// --- stats ------------------------------------------------------------------

int cmd_stats(const StatsArgs& args, std::ostream& out, std::ostream& err) {
  if (!args.run_dir && !args.instances) {
    err << "stats: pass --run or --instances\n";
    return kExitUsage;
  }
  try {
    if (args.run_dir) {
      const auto pairs = io::read_pairs(*args.run_dir / "pairs.jsonl");
      const json stats = json::parse(util::read_file((*args.run_dir / "stats.json").string()));
      out << "run " << args.run_dir->string() << "\n";
      out << "complete " << (stats.value("complete", false) ? "yes" : "no") << "\n";
      for (const char* key : {"total", "retained", "dropped_no_correct", "dropped_no_incorrect",
                              "skipped_free_form", "errored", "cancelled"}) {
        out << key << " " << stats.value(key, 0L) << "\n";
      }
      if (stats.contains("responses_by_modality")) {
        for (const auto& [m, n] : stats["responses_by_modality"].items()) {
          out << "responses_" << m << " " << n.get<long>() << "\n";
        }
      }
      std::map<std::string, long> counts;
      double freq = 0.0;
      for (const auto& p : pairs) {
        for (const auto& [m, c] : p.negative_modality_counts) counts[m] += c;
        freq += p.negative_frequency;
      }
      out << "pairs " << pairs.size() << "\n";
      if (!pairs.empty()) {
        out << "mean_negative_frequency " << fixed(freq / pairs.size(), 2) << "\n";
        for (const auto& [m, c] : counts) out << "negative_votes_" << m << " " << c << "\n";
      }
    }
    if (args.instances) {
      const auto instances = load_instances(args.instances->string());
      std::map<std::string, long> per_dataset;
      std::map<SizeBucket, long> per_bucket;
      std::map<TaskKind, long> per_task;
      for (const auto& inst : instances) {
        ++per_dataset[inst.dataset];
        ++per_bucket[size_bucket(token_count(inst.table))];
        ++per_task[inst.task];
      }
      out << "instances " << instances.size() << "\n";
      for (const auto& [d, n] : per_dataset) out << "dataset_" << d << " " << n << "\n";
      for (const auto& [t, n] : per_task) out << "task_" << to_string(t) << " " << n << "\n";
      for (const auto& [b, n] : per_bucket) out << "bucket_" << to_string(b) << " " << n << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "stats: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace tabdpo::cli
