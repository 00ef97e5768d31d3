#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabdpo/image_render.hpp"
#include "tabdpo/model_client.hpp"
#include "tabdpo/table.hpp"
#include "tabdpo/text_render.hpp"

namespace tabdpo {

struct SelectionStrategy {
  enum class Kind { ModalityConsistent, RandomNegative, MultiModalOnly };
  Kind kind = Kind::ModalityConsistent;
  // Required for RandomNegative.
  std::optional<std::uint64_t> seed;

  static SelectionStrategy modality_consistent() { return {Kind::ModalityConsistent, {}}; }
  static SelectionStrategy random_negative(std::uint64_t s) { return {Kind::RandomNegative, s}; }
  static SelectionStrategy multimodal_only() { return {Kind::MultiModalOnly, {}}; }

  // Hybrid strategies sample all three arms.
  bool samples_all_arms() const { return kind != Kind::MultiModalOnly; }
  void validate() const;

  friend bool operator==(const SelectionStrategy&, const SelectionStrategy&) = default;
};

// "modality-consistent", "random", "multimodal-only".
std::string_view to_string(SelectionStrategy::Kind kind);
std::optional<SelectionStrategy::Kind> parse_strategy_kind(std::string_view name);

// How incorrect answers are counted when picking the negative.
enum class NegativePooling {
  // One frequency table over every arm.
  Pooled,
  // Score each answer by its largest single-arm count (experimental).
  PerModality,
};

struct ResponseSet {
  std::string instance_id;
  std::vector<SampledResponse> responses;

  std::size_t count(Modality m) const;
};

struct PreferencePair {
  std::string instance_id;
  std::string positive;
  std::string negative;
  int negative_frequency = 0;
  std::map<Modality, int> negative_modality_counts;
  SelectionStrategy strategy;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

// Table renderings needed by the sampling arms.
struct RenderOptions {
  TextFormat text_format = TextFormat::Markdown;
  ImageStyle style;
};

struct Renderings {
  TextRendering text;
  std::optional<ImageRendering> image;
};

Renderings render_for_sampling(const Instance& instance, const SelectionStrategy& strategy,
                               const RenderOptions& options);

ResponseSet collect_responses(const Instance& instance, const SelectionStrategy& strategy,
                              const SamplingConfig& cfg, ModelHandle& model,
                              const TemplateSet& templates, const Renderings& renderings);

// True iff the set has at least one correct and at least one incorrect
// response.
bool retain_instance(const ResponseSet& set, const Instance& instance);

// Positive is always the first gold answer. ModalityConsistent picks the
// most frequent incorrect normalized answer across all arms (ties go to the
// lexicographically smallest key) and reports its first surface spelling;
// RandomNegative draws uniformly over incorrect responses with a stream
// seeded from (strategy seed, instance id). Throws NoNegativeError if no
// response is incorrect.
PreferencePair select_negative(const ResponseSet& set, const Instance& instance,
                               const SelectionStrategy& strategy,
                               NegativePooling pooling = NegativePooling::Pooled);

struct BuildError {
  std::string instance_id;
  std::string message;
};

struct BuildStats {
  long total = 0;
  long retained = 0;
  long dropped_no_correct = 0;
  long dropped_no_incorrect = 0;
  long skipped_free_form = 0;
  long errored = 0;
  long cancelled = 0;
  std::map<Modality, long> responses_by_modality;
  std::vector<BuildError> errors;
  bool threshold_exceeded = false;

  double error_rate() const { return total == 0 ? 0.0 : static_cast<double>(errored) / total; }
};

struct BuildOptions {
  RenderOptions render;
  TemplateSet templates;
  NegativePooling pooling = NegativePooling::Pooled;
  int parallelism = 8;
  double max_error_rate = 0.10;
  // Polled between instances; set from a signal handler for a graceful stop.
  const std::atomic<bool>* cancel = nullptr;
};

// One retained instance, handed to the sink in input order.
struct BuildItem {
  const Instance* instance = nullptr;
  PreferencePair pair;
  const Renderings* renderings = nullptr;
  const ResponseSet* responses = nullptr;
};

using PairSink = std::function<void(const BuildItem&)>;

// Runs collect -> retain -> select over every instance with bounded
// parallelism. Per-instance failures are recorded in the stats rather than
// thrown; `threshold_exceeded` is set when the error rate passes
// `max_error_rate`.
BuildStats build_dataset(std::span<const Instance> instances, const SelectionStrategy& strategy,
                         const SamplingConfig& cfg, ModelHandle& model,
                         const BuildOptions& options, const PairSink& sink);

}  // namespace tabdpo
