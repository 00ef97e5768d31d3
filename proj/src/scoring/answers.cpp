#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include "tabdpo/errors.hpp"
#include "tabdpo/model_client.hpp"
#include "tabdpo/scoring.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo::scoring {

namespace {

constexpr double kRelTolerance = 1e-6;

constexpr std::array<std::string_view, 4> kCurrency = {"€", "£", "¥", "₹"};

bool is_strippable(char c) {
  if (c < 0 || !std::ispunct(static_cast<unsigned char>(c))) return false;
  // Signs and a few symbols that carry meaning at the edges of an answer.
  return c != '-' && c != '+' && c != '#' && c != '@' && c != '&' && c != '/';
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : util::trim(s)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string_view strip_edges(std::string_view s) {
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    s = util::trim(s);
    if (s.empty()) break;
    const char front = s.front();
    const bool leading_decimal_point =
        front == '.' && s.size() > 1 && std::isdigit(static_cast<unsigned char>(s[1]));
    if (is_strippable(front) && !leading_decimal_point) {
      s.remove_prefix(1);
      changed = true;
      continue;
    }
    if (is_strippable(s.back())) {
      s.remove_suffix(1);
      changed = true;
      continue;
    }
    for (auto sym : kCurrency) {
      if (s.starts_with(sym)) {
        s.remove_prefix(sym.size());
        changed = true;
      } else if (s.ends_with(sym)) {
        s.remove_suffix(sym.size());
        changed = true;
      }
    }
  }
  return s;
}

std::optional<std::string> verification_label(const std::string& canonical, TaskKind task) {
  static const std::set<std::string> kTrue = {"yes",      "true",    "entailed", "entail",
                                              "entails",  "support", "supported", "supports"};
  static const std::set<std::string> kFalse = {"no",         "false",        "refuted",
                                               "refute",     "refutes",      "contradict",
                                               "contradicts", "contradicted"};
  static const std::set<std::string> kNeutral = {"neutral", "unknown"};
  const bool ternary = task == TaskKind::FactVerifyTernary;
  if (kTrue.count(canonical)) return ternary ? "entail" : "true";
  if (kFalse.count(canonical)) return ternary ? "contradict" : "false";
  if (ternary && kNeutral.count(canonical)) return "neutral";
  return std::nullopt;
}

}  // namespace

std::string extract_answer(std::string_view raw_text, std::string_view anchor) {
  if (!anchor.empty()) {
    const auto pos = raw_text.rfind(anchor);
    if (pos != std::string_view::npos) {
      return std::string(util::trim(raw_text.substr(pos + anchor.size())));
    }
  }
  std::string_view rest = raw_text;
  while (!rest.empty()) {
    const auto nl = rest.rfind('\n');
    const std::string_view line =
        nl == std::string_view::npos ? rest : rest.substr(nl + 1);
    if (!util::trim(line).empty()) return std::string(util::trim(line));
    if (nl == std::string_view::npos) break;
    rest = rest.substr(0, nl);
  }
  return {};
}

NormalizedAnswer normalize(std::string_view answer, TaskKind task) {
  const std::string lowered = util::to_lower_ascii(answer);
  std::string canonical = collapse_whitespace(strip_edges(collapse_whitespace(lowered)));

  NormalizedAnswer out;
  std::string ungrouped = util::strip_digit_grouping(canonical);
  if (auto value = util::parse_decimal(ungrouped)) {
    out.canonical = std::move(ungrouped);
    out.numeric = value;
    return out;
  }
  if (task != TaskKind::QuestionAnswering) {
    if (auto label = verification_label(canonical, task)) {
      out.canonical = *label;
      return out;
    }
  }
  out.canonical = std::move(canonical);
  return out;
}

std::string answer_key(const NormalizedAnswer& answer) {
  if (!answer.numeric) return answer.canonical;
  double v = *answer.numeric;
  if (v == 0.0) v = 0.0;  // fold -0
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool answers_match(const NormalizedAnswer& a, const NormalizedAnswer& b) {
  if (a.canonical == b.canonical) return true;
  if (a.numeric && b.numeric) {
    const double x = *a.numeric, y = *b.numeric;
    if (x == y) return true;
    return std::fabs(x - y) <= kRelTolerance * std::max(std::fabs(x), std::fabs(y));
  }
  return false;
}

int reward(std::string_view extracted_answer, const Instance& instance) {
  const auto candidate = normalize(extracted_answer, instance.task);
  if (candidate.canonical.empty()) return 0;
  for (const auto& gold : instance.gold_answers) {
    if (answers_match(candidate, normalize(gold, instance.task))) return 1;
  }
  return 0;
}

int reward(const SampledResponse& response, const Instance& instance) {
  return reward(response.extracted_answer, instance);
}

double accuracy(std::span<const int> rewards) {
  if (rewards.empty()) throw EmptyInputError("accuracy of an empty list");
  long correct = 0;
  for (int r : rewards) correct += r;
  return static_cast<double>(correct) / static_cast<double>(rewards.size());
}

double consistency(std::span<const SampledResponse> responses, const Instance& instance) {
  if (responses.empty()) throw EmptyInputError("consistency of an empty response list");
  long correct = 0;
  for (const auto& r : responses) correct += reward(r, instance);
  return static_cast<double>(correct) / static_cast<double>(responses.size());
}

double consistency(std::span<const std::string> extracted_answers, const Instance& instance) {
  if (extracted_answers.empty()) throw EmptyInputError("consistency of an empty answer list");
  long correct = 0;
  for (const auto& a : extracted_answers) correct += reward(a, instance);
  return static_cast<double>(correct) / static_cast<double>(extracted_answers.size());
}

double jaccard(std::span<const std::string> answers_a, std::span<const std::string> answers_b,
               TaskKind task) {
  if (answers_a.empty() || answers_b.empty()) {
    throw EmptyInputError("jaccard needs two non-empty answer lists");
  }
  std::set<std::string> a, b;
  for (const auto& s : answers_a) a.insert(answer_key(normalize(s, task)));
  for (const auto& s : answers_b) b.insert(answer_key(normalize(s, task)));
  std::size_t common = 0;
  for (const auto& k : a) common += b.count(k);
  const std::size_t unioned = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(unioned);
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

}  // namespace tabdpo::scoring
