#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabdpo/table.hpp"

namespace tabdpo {

struct SampledResponse;

namespace scoring {

inline constexpr std::string_view kDefaultAnchor = "Final Answer:";

// Lowercase, whitespace-collapsed, surrounding punctuation / currency /
// percent removed. `numeric` is set iff `canonical` is a plain number once
// digit grouping is removed (in which case grouping is removed from
// `canonical` too). Fact-verification labels are folded onto
// "true"/"false" (binary) or "entail"/"contradict"/"neutral" (ternary).
struct NormalizedAnswer {
  std::string canonical;
  std::optional<double> numeric;

  friend bool operator==(const NormalizedAnswer&, const NormalizedAnswer&) = default;
};

// Text after the last occurrence of `anchor`, trimmed. Without an anchor, the
// last non-empty line.
std::string extract_answer(std::string_view raw_text, std::string_view anchor = kDefaultAnchor);

NormalizedAnswer normalize(std::string_view answer, TaskKind task);

// Grouping key: numeric answers collapse to their shortest round-trip
// decimal ("22.0" and "22" share key "22"), others use the canonical text.
std::string answer_key(const NormalizedAnswer& answer);

// Normalized string equality, or numeric equality within relative 1e-6.
bool answers_match(const NormalizedAnswer& a, const NormalizedAnswer& b);

// r(y) in {0, 1}: 1 iff `answer` matches any gold answer.
int reward(std::string_view extracted_answer, const Instance& instance);
int reward(const SampledResponse& response, const Instance& instance);

// Mean reward. Throws EmptyInputError on an empty list.
double accuracy(std::span<const int> rewards);

// Fraction of responses with reward 1. Throws EmptyInputError.
double consistency(std::span<const SampledResponse> responses, const Instance& instance);
double consistency(std::span<const std::string> extracted_answers, const Instance& instance);

// |A ∩ B| / |A ∪ B| over de-duplicated normalized answers.
double jaccard(std::span<const std::string> answers_a, std::span<const std::string> answers_b,
               TaskKind task = TaskKind::QuestionAnswering);

// --- BLEU -------------------------------------------------------------------

inline constexpr int kBleuOrder = 4;

// Lowercases and splits on whitespace and ASCII punctuation (punctuation is
// dropped).
std::vector<std::string> bleu_tokenize(std::string_view text);

// Sufficient statistics for one candidate; add them up for corpus BLEU.
struct BleuStats {
  long matches[kBleuOrder] = {};
  long totals[kBleuOrder] = {};
  long candidate_length = 0;
  long reference_length = 0;

  BleuStats& operator+=(const BleuStats& other);
};

// Clipped n-gram counts against every reference; reference length is the
// one closest to the candidate (shorter wins ties).
BleuStats bleu_stats(std::string_view candidate, std::span<const std::string> references);

// BLEU-4, uniform weights, brevity penalty; an order with zero matches uses
// 1/(total+1) and an order with no candidate n-grams contributes 1.
double bleu_from_stats(const BleuStats& stats);

// Single-candidate BLEU. Throws EmptyInputError if `references` is empty.
double bleu(std::string_view candidate, std::span<const std::string> references);

// --- reports ----------------------------------------------------------------

struct AccuracyCell {
  long correct = 0;
  long total = 0;
  double value() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

struct MetricReport {
  std::string modality;
  std::map<std::string, AccuracyCell> per_dataset;
  std::map<SizeBucket, AccuracyCell> per_bucket;
  AccuracyCell overall;
  std::optional<double> bleu_sentence_avg;
  std::optional<double> bleu_corpus;
  std::optional<double> mean_consistency;
  long n_instances = 0;
};

// Two decimals, as a percentage: 0.66666 -> "66.67".
std::string format_percent(double fraction);

}  // namespace scoring
}  // namespace tabdpo
