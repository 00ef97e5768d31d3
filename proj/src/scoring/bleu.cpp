#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>

#include "tabdpo/errors.hpp"
#include "tabdpo/scoring.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo::scoring {

namespace {

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

}  // namespace

std::vector<std::string> bleu_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u) || (u < 0x80 && std::ispunct(u))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (int n = 0; n < kBleuOrder; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  candidate_length += other.candidate_length;
  reference_length += other.reference_length;
  return *this;
}

BleuStats bleu_stats(std::string_view candidate, std::span<const std::string> references) {
  if (references.empty()) throw EmptyInputError("BLEU needs at least one reference");
  const auto cand = bleu_tokenize(candidate);
  std::vector<std::vector<std::string>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(bleu_tokenize(r));

  BleuStats stats;
  stats.candidate_length = static_cast<long>(cand.size());
  long best_len = static_cast<long>(refs.front().size());
  for (const auto& r : refs) {
    const long len = static_cast<long>(r.size());
    const long d = std::labs(len - stats.candidate_length);
    const long best_d = std::labs(best_len - stats.candidate_length);
    if (d < best_d || (d == best_d && len < best_len)) best_len = len;
  }
  stats.reference_length = best_len;

  for (int n = 1; n <= kBleuOrder; ++n) {
    const auto cand_counts = count_ngrams(cand, n);
    NgramCounts max_ref;
    for (const auto& r : refs) {
      for (const auto& [gram, count] : count_ngrams(r, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, count);
      }
    }
    long matched = 0, total = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      const auto it = max_ref.find(gram);
      if (it != max_ref.end()) matched += std::min(count, it->second);
    }
    stats.matches[n - 1] = matched;
    stats.totals[n - 1] = total;
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats) {
  if (stats.candidate_length == 0) return 0.0;
  double log_precision = 0.0;
  for (int n = 0; n < kBleuOrder; ++n) {
    double p = 1.0;
    if (stats.totals[n] > 0) {
      p = stats.matches[n] > 0
              ? static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n])
              : 1.0 / static_cast<double>(stats.totals[n] + 1);
    }
    log_precision += std::log(p) / kBleuOrder;
  }
  double brevity = 1.0;
  if (stats.candidate_length < stats.reference_length) {
    brevity = std::exp(1.0 - static_cast<double>(stats.reference_length) /
                                 static_cast<double>(stats.candidate_length));
  }
  return brevity * std::exp(log_precision);
}

double bleu(std::string_view candidate, std::span<const std::string> references) {
  return bleu_from_stats(bleu_stats(candidate, references));
}

}  // namespace tabdpo::scoring
