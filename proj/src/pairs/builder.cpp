#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include "tabdpo/errors.hpp"
#include "tabdpo/pair_builder.hpp"
#include "tabdpo/scoring.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo {

namespace {

struct AnswerTally {
  int count = 0;
  std::map<Modality, int> by_modality;
  std::string first_surface;
};

// Incorrect responses grouped by normalized key, in first-seen order of
// surface spelling.
std::map<std::string, AnswerTally> tally_incorrect(const ResponseSet& set,
                                                   const Instance& instance) {
  std::map<std::string, AnswerTally> tally;
  for (const auto& r : set.responses) {
    if (scoring::reward(r, instance) == 1) continue;
    const auto key = scoring::answer_key(scoring::normalize(r.extracted_answer, instance.task));
    auto& t = tally[key];
    if (t.count == 0) t.first_surface = r.extracted_answer;
    ++t.count;
    ++t.by_modality[r.modality];
  }
  return tally;
}

std::map<Modality, int> full_modality_counts(const std::map<Modality, int>& partial) {
  std::map<Modality, int> out;
  for (auto m : kAllModalities) {
    const auto it = partial.find(m);
    out[m] = it == partial.end() ? 0 : it->second;
  }
  return out;
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace

void SelectionStrategy::validate() const {
  if (kind == Kind::RandomNegative && !seed) {
    throw ConfigError("strategy.seed", "the random strategy requires an explicit seed");
  }
}

std::string_view to_string(SelectionStrategy::Kind kind) {
  switch (kind) {
    case SelectionStrategy::Kind::ModalityConsistent:
      return "modality-consistent";
    case SelectionStrategy::Kind::RandomNegative:
      return "random";
    case SelectionStrategy::Kind::MultiModalOnly:
      return "multimodal-only";
  }
  return "modality-consistent";
}

std::optional<SelectionStrategy::Kind> parse_strategy_kind(std::string_view name) {
  const std::string n = util::to_lower_ascii(name);
  if (n == "modality-consistent") return SelectionStrategy::Kind::ModalityConsistent;
  if (n == "random") return SelectionStrategy::Kind::RandomNegative;
  if (n == "multimodal-only" || n == "dpo") return SelectionStrategy::Kind::MultiModalOnly;
  return std::nullopt;
}

std::size_t ResponseSet::count(Modality m) const {
  return static_cast<std::size_t>(std::count_if(
      responses.begin(), responses.end(), [m](const auto& r) { return r.modality == m; }));
}

Renderings render_for_sampling(const Instance& instance, const SelectionStrategy&,
                               const RenderOptions& options) {
  // Every strategy has at least one arm that sends the image.
  Renderings out{render_text(instance.table, options.text_format), std::nullopt};
  out.image = render_image(instance.table, options.style);
  return out;
}

ResponseSet collect_responses(const Instance& instance, const SelectionStrategy& strategy,
                              const SamplingConfig& cfg, ModelHandle& model,
                              const TemplateSet& templates, const Renderings& renderings) {
  ResponseSet set;
  set.instance_id = instance.id;
  const ImageRendering* image = renderings.image ? &*renderings.image : nullptr;
  std::vector<Modality> arms;
  if (strategy.samples_all_arms()) {
    arms.assign(std::begin(kAllModalities), std::end(kAllModalities));
  } else {
    arms = {Modality::Hybrid};
  }
  for (auto arm : arms) {
    std::vector<SampledResponse> got;
    try {
      got = sample(instance, arm, &renderings.text, image, cfg, templates, model);
    } catch (const EndpointError& e) {
      throw EndpointError(e.status(), instance.id + " (" + std::string(to_string(arm)) +
                                          "): " + e.body());
    }
    for (auto& r : got) set.responses.push_back(std::move(r));
  }
  return set;
}

bool retain_instance(const ResponseSet& set, const Instance& instance) {
  bool any_correct = false, any_incorrect = false;
  for (const auto& r : set.responses) {
    if (scoring::reward(r, instance) == 1) {
      any_correct = true;
    } else {
      any_incorrect = true;
    }
    if (any_correct && any_incorrect) return true;
  }
  return false;
}

PreferencePair select_negative(const ResponseSet& set, const Instance& instance,
                               const SelectionStrategy& strategy, NegativePooling pooling) {
  strategy.validate();
  const auto tally = tally_incorrect(set, instance);
  if (tally.empty()) throw NoNegativeError(instance.id + ": no incorrect response to reject");

  PreferencePair pair;
  pair.instance_id = instance.id;
  pair.positive = instance.gold_answers.front();
  pair.strategy = strategy;

  const std::pair<const std::string, AnswerTally>* chosen = nullptr;
  if (strategy.kind == SelectionStrategy::Kind::RandomNegative) {
    std::vector<const std::string*> incorrect_keys;
    for (const auto& r : set.responses) {
      if (scoring::reward(r, instance) == 1) continue;
      incorrect_keys.push_back(&tally.find(scoring::answer_key(
                                   scoring::normalize(r.extracted_answer, instance.task)))->first);
    }
    std::mt19937_64 rng(util::mix_seed({*strategy.seed, util::fnv1a64(instance.id)}));
    const auto pick = bounded(rng, incorrect_keys.size());
    chosen = &*tally.find(*incorrect_keys[pick]);
  } else {
    const auto score = [pooling](const AnswerTally& t) {
      if (pooling == NegativePooling::Pooled) return t.count;
      int best = 0;
      for (const auto& [m, c] : t.by_modality) best = std::max(best, c);
      return best;
    };
    // std::map iterates keys in ascending order, so strict '>' keeps the
    // smallest key among ties.
    for (const auto& entry : tally) {
      if (!chosen || score(entry.second) > score(chosen->second)) chosen = &entry;
    }
  }
  pair.negative = chosen->second.first_surface;
  pair.negative_frequency = chosen->second.count;
  pair.negative_modality_counts = full_modality_counts(chosen->second.by_modality);
  return pair;
}

namespace {

enum class Outcome { Retained, NoCorrect, NoIncorrect, FreeForm, Errored, Cancelled };

struct Slot {
  Outcome outcome = Outcome::Cancelled;
  std::optional<Renderings> renderings;
  ResponseSet responses;
  std::optional<PreferencePair> pair;
  std::string error;
};

void process(const Instance& instance, const SelectionStrategy& strategy,
             const SamplingConfig& cfg, ModelHandle& model, const BuildOptions& options,
             Slot& slot) {
  if (instance.free_form) {
    slot.outcome = Outcome::FreeForm;
    return;
  }
  try {
    slot.renderings = render_for_sampling(instance, strategy, options.render);
    slot.responses =
        collect_responses(instance, strategy, cfg, model, options.templates, *slot.renderings);
    bool any_correct = false, any_incorrect = false;
    for (const auto& r : slot.responses.responses) {
      (scoring::reward(r, instance) == 1 ? any_correct : any_incorrect) = true;
    }
    if (!any_correct) {
      slot.outcome = Outcome::NoCorrect;
    } else if (!any_incorrect) {
      slot.outcome = Outcome::NoIncorrect;
    } else {
      slot.pair = select_negative(slot.responses, instance, strategy, options.pooling);
      slot.outcome = Outcome::Retained;
    }
  } catch (const Error& e) {
    slot.outcome = Outcome::Errored;
    slot.error = e.what();
  }
}

}  // namespace

BuildStats build_dataset(std::span<const Instance> instances, const SelectionStrategy& strategy,
                         const SamplingConfig& cfg, ModelHandle& model,
                         const BuildOptions& options, const PairSink& sink) {
  strategy.validate();
  cfg.validate();
  BuildStats stats;
  for (auto m : kAllModalities) stats.responses_by_modality[m] = 0;

  const std::size_t workers = static_cast<std::size_t>(std::max(1, options.parallelism));
  const std::size_t chunk = workers * 4;
  const double error_budget = options.max_error_rate * static_cast<double>(instances.size());
  bool stopping = false;

  for (std::size_t begin = 0; begin < instances.size(); begin += chunk) {
    const std::size_t end = std::min(instances.size(), begin + chunk);
    std::vector<Slot> slots(end - begin);
    if (!stopping) {
      std::atomic<std::size_t> next{begin};
      const auto work = [&] {
        for (std::size_t i = next++; i < end; i = next++) {
          if (options.cancel && options.cancel->load()) return;
          process(instances[i], strategy, cfg, model, options, slots[i - begin]);
        }
      };
      std::vector<std::jthread> pool;
      for (std::size_t w = 1; w < std::min(workers, end - begin); ++w) pool.emplace_back(work);
      work();
    }

    // Single aggregation point, in input order.
    for (std::size_t i = begin; i < end; ++i) {
      Slot& slot = slots[i - begin];
      ++stats.total;
      for (const auto& r : slot.responses.responses) ++stats.responses_by_modality[r.modality];
      switch (slot.outcome) {
        case Outcome::Retained:
          ++stats.retained;
          if (sink) {
            sink(BuildItem{&instances[i], *slot.pair, &*slot.renderings, &slot.responses});
          }
          break;
        case Outcome::NoCorrect:
          ++stats.dropped_no_correct;
          break;
        case Outcome::NoIncorrect:
          ++stats.dropped_no_incorrect;
          break;
        case Outcome::FreeForm:
          ++stats.skipped_free_form;
          break;
        case Outcome::Errored:
          ++stats.errored;
          stats.errors.push_back({instances[i].id, slot.error});
          break;
        case Outcome::Cancelled:
          ++stats.cancelled;
          break;
      }
    }
    if (static_cast<double>(stats.errored) > error_budget) stopping = true;
    if (options.cancel && options.cancel->load()) stopping = true;
  }
  stats.threshold_exceeded = stats.error_rate() > options.max_error_rate;
  return stats;
}

}  // namespace tabdpo
