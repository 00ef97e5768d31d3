// Shared fixtures and independent oracles for the unit and acceptance suites.
// The oracles deliberately avoid the library's own helpers for the quantity
// under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabdpo/image_render.hpp"
#include "tabdpo/model_client.hpp"
#include "tabdpo/pair_builder.hpp"
#include "tabdpo/scoring.hpp"
#include "tabdpo/table.hpp"

namespace support {

using namespace tabdpo;

inline std::filesystem::path data_dir() { return TABDPO_TEST_DATA; }

inline Instance make_instance(std::string id, std::vector<std::string> gold,
                              TaskKind task = TaskKind::QuestionAnswering) {
  Instance inst{id, Table::from_strings({"k", "v"}, {{"a", "1"}}, std::nullopt, id), "q?",
                std::move(gold), task};
  return inst;
}

inline SampledResponse response(Modality m, std::string answer) {
  SampledResponse r;
  r.modality = m;
  r.raw_text = "Final Answer: " + answer;
  r.extracted_answer = std::move(answer);
  return r;
}

// --- BLEU oracle ------------------------------------------------------------
// Regex tokenization, joined-string n-gram keys, product-then-root mean.

inline std::vector<std::string> oracle_tokens(const std::string& text) {
  static const std::regex word(R"([^\s!-/:-@\[-`{-~]+)");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), word); it != std::sregex_iterator();
       ++it) {
    std::string w = it->str();
    for (auto& c : w) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    out.push_back(w);
  }
  return out;
}

inline std::unordered_map<std::string, int> oracle_grams(const std::vector<std::string>& t, int n) {
  std::unordered_map<std::string, int> g;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) key += t[i + j] + '\x1f';
    g[key] += 1;
  }
  return g;
}

struct OracleCounts {
  double match[4] = {0, 0, 0, 0};
  double total[4] = {0, 0, 0, 0};
  double cand_len = 0;
  double ref_len = 0;
};

inline OracleCounts oracle_counts(const std::string& cand, const std::vector<std::string>& refs) {
  OracleCounts oc;
  const auto c = oracle_tokens(cand);
  std::vector<std::vector<std::string>> r;
  for (const auto& x : refs) r.push_back(oracle_tokens(x));
  oc.cand_len = static_cast<double>(c.size());
  // Closest reference length, the shorter one on ties.
  std::vector<std::pair<double, double>> dist;
  for (const auto& x : r) {
    const double len = static_cast<double>(x.size());
    dist.push_back({std::fabs(len - oc.cand_len), len});
  }
  oc.ref_len = std::min_element(dist.begin(), dist.end())->second;
  for (int n = 1; n <= 4; ++n) {
    const auto cg = oracle_grams(c, n);
    for (const auto& [gram, count] : cg) {
      int best = 0;
      for (const auto& x : r) {
        const auto rg = oracle_grams(x, n);
        const auto it = rg.find(gram);
        if (it != rg.end()) best = std::max(best, it->second);
      }
      oc.match[n - 1] += std::min(count, best);
      oc.total[n - 1] += count;
    }
  }
  return oc;
}

inline double oracle_bleu_from(const OracleCounts& oc) {
  if (oc.cand_len == 0) return 0.0;
  double product = 1.0;
  for (int n = 0; n < 4; ++n) {
    if (oc.total[n] == 0) continue;
    product *= oc.match[n] == 0 ? 1.0 / (oc.total[n] + 1.0) : oc.match[n] / oc.total[n];
  }
  const double bp = oc.cand_len >= oc.ref_len ? 1.0 : std::exp(1.0 - oc.ref_len / oc.cand_len);
  return bp * std::pow(product, 0.25);
}

inline double oracle_bleu(const std::string& cand, const std::vector<std::string>& refs) {
  return oracle_bleu_from(oracle_counts(cand, refs));
}

// Pinned mini-corpus: (candidate, references).
inline std::vector<std::pair<std::string, std::vector<std::string>>> bleu_corpus() {
  return {
      {"the cat sat on the mat", {"the cat sat on the mat"}},
      {"the cat is on the mat", {"there is a cat on the mat", "the cat sits on the mat"}},
      {"a b c d e f g h i j", {"k l m n o p q r s t"}},
      {"one two three four five six seven eight nine ten",
       {"two one four three six five eight seven ten nine"}},
      {"The team won 3 games in 2019.", {"In 2019, the team won three games."}},
      {"Smith scored the most points.", {"Smith scored the most points in the season."}},
      {"the the the the the the the", {"the cat is on the mat"}},
      {"", {"an empty candidate"}},
      {"short", {"a much longer reference sentence here"}},
      {"It was released in 1998 by Sony.", {"Sony released it in 1998.", "It came out in 1998."}},
      {"Paris is the capital.", {"Paris is the capital of France."}},
      {"Revenue rose by 12% to $4.5 billion", {"Revenue increased 12% to $4.5 billion"}},
      {"He played for Boston and New York.", {"He played for New York and Boston."}},
      {"no overlap at all", {"completely different words used"}},
      {"The bridge is 1,200 meters long.", {"The bridge has a length of 1,200 meters."}},
      {"WINNER: Team-A", {"winner team a"}},
      {"the district had 4 schools", {"the district had four schools", "4 schools were in it"}},
      {"a a a b b b", {"a b a b a b"}},
      {"She was born in Ohio in 1950 and died in 2001.",
       {"Born in Ohio in 1950, she died in 2001."}},
      {"x", {"x"}},
  };
}

// --- negative-selection oracle ---------------------------------------------

struct OracleNegative {
  std::string surface;
  int frequency = 0;
  bool exists = false;
};

// Counts every incorrect key by a full rescan and takes the argmax, smallest
// key on ties.
inline OracleNegative oracle_negative(const std::vector<SampledResponse>& responses,
                                      const Instance& inst) {
  std::vector<std::string> keys;
  std::vector<const SampledResponse*> wrong;
  for (const auto& r : responses) {
    bool correct = false;
    const auto n = scoring::normalize(r.extracted_answer, inst.task);
    for (const auto& g : inst.gold_answers) {
      correct = correct || scoring::answers_match(n, scoring::normalize(g, inst.task));
    }
    if (correct) continue;
    keys.push_back(scoring::answer_key(n));
    wrong.push_back(&r);
  }
  OracleNegative out;
  if (keys.empty()) return out;
  int best = -1;
  std::string best_key;
  for (const auto& candidate : keys) {
    int count = 0;
    for (const auto& k : keys) count += k == candidate ? 1 : 0;
    if (count > best || (count == best && candidate < best_key)) {
      best = count;
      best_key = candidate;
    }
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i] == best_key) {
      out.surface = wrong[i]->extracted_answer;
      break;
    }
  }
  out.frequency = best;
  out.exists = true;
  return out;
}

struct RandomSet {
  Instance instance;
  ResponseSet set;
  bool forced_tie = false;
};

// K in 1..10 per arm, answers drawn from up to 20 wrong symbols plus the
// gold answer. Every fourth set is built with a tie for the top wrong count.
inline RandomSet random_response_set(std::mt19937_64& rng, int index) {
  RandomSet out{make_instance("inst-" + std::to_string(index), {"gold"}), {}, false};
  out.set.instance_id = out.instance.id;
  std::uniform_int_distribution<int> kdist(1, 10), adist(1, 20);
  const int k = kdist(rng);
  const int alphabet = adist(rng);
  std::vector<std::string> symbols;
  for (int i = 0; i < alphabet; ++i) symbols.push_back("w" + std::to_string(i));
  symbols.push_back("gold");
  std::vector<SampledResponse> all;
  if (index % 4 == 0 && alphabet >= 2 && 3 * k >= 4) {
    // Two distinct wrong answers with the same, maximal count.
    out.forced_tie = true;
    std::vector<std::string> pool;
    const int half = (3 * k) / 2;
    std::uniform_int_distribution<int> pick(0, alphabet - 1);
    const int a = pick(rng);
    int b = pick(rng);
    while (b == a) b = pick(rng);
    for (int i = 0; i < half; ++i) pool.push_back(symbols[a]);
    for (int i = 0; i < half; ++i) pool.push_back(symbols[b]);
    while (static_cast<int>(pool.size()) < 3 * k) pool.push_back("gold");
    std::shuffle(pool.begin(), pool.end(), rng);
    for (int i = 0; i < 3 * k; ++i) all.push_back(response(kAllModalities[i / k], pool[i]));
  } else {
    std::uniform_int_distribution<int> pick(0, alphabet);
    for (auto m : kAllModalities) {
      for (int i = 0; i < k; ++i) all.push_back(response(m, symbols[pick(rng)]));
    }
  }
  out.set.responses = std::move(all);
  return out;
}

// --- tables -----------------------------------------------------------------

// Arbitrary cell text drawn from an alphabet with pipes, backslashes,
// newlines, tabs and multi-byte code points. Never blank at the edges when
// `header` is set.
inline std::string random_cell(std::mt19937_64& rng, bool header) {
  static const std::vector<std::string> atoms = {
      "a", "B", "7", " ", "|", "\\", "\n", "\t", "-", ":", "é", "ß", "中", "表", "😀", "\\n",
      "||", "`", "*", "#", "x y", "€"};
  std::uniform_int_distribution<int> len(header ? 1 : 0, 8);
  std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s += atoms[pick(rng)];
  if (header) {
    // Headers are trimmed on ingest; keep them non-blank and edge-trimmed.
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\n')) s.erase(0, 1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n')) s.pop_back();
    if (s.empty()) s = "h";
  }
  return s;
}

inline Table random_table(std::mt19937_64& rng, const std::string& id) {
  std::uniform_int_distribution<int> cols(1, 6), rows(0, 8);
  const int c = cols(rng), r = rows(rng);
  std::vector<std::string> header;
  for (int i = 0; i < c; ++i) header.push_back(random_cell(rng, true));
  std::vector<std::vector<std::string>> body(r);
  for (auto& row : body) {
    for (int i = 0; i < c; ++i) row.push_back(random_cell(rng, false));
  }
  return Table::from_strings(header, body, std::nullopt, id);
}

// --- golden renderer fixtures ------------------------------------------------

struct GoldenFixture {
  std::string name;
  Table table;
  ImageStyle style;
};

inline std::vector<GoldenFixture> golden_fixtures() {
  std::vector<GoldenFixture> out;
  out.push_back({"basic", Table::from_strings({"Name", "Score"}, {{"Ann", "12"}, {"Bob", "7"}}),
                 ImageStyle{}});
  ImageStyle big;
  big.font_size_px = 30;
  big.cell_padding_px = 6;
  big.grid_line_width_px = 2;
  out.push_back({"scaled", Table::from_strings({"City", "Pop."}, {{"Oslo", "709,037"}}), big});
  ImageStyle colored;
  colored.header_background = {30, 60, 120};
  colored.text_color = {250, 250, 250};
  colored.body_background = {40, 40, 40};
  colored.grid_color = {200, 0, 0};
  out.push_back({"colored",
                 Table::from_strings({"Q", "Answer"}, {{"a|b", "x\\y"}, {"", "tab\there"}}),
                 colored});
  ImageStyle wrapped;
  wrapped.wrap_chars = 12;
  wrapped.max_lines = 2;
  out.push_back(
      {"wrapped",
       Table::from_strings({"Team", "Notes"},
                           {{"Rovers", "Promoted after a long season with many close wins"},
                            {"United", "Relegated"}}),
       wrapped});
  out.push_back({"unicode",
                 Table::from_strings({"Année", "Coût"}, {{"2019", "€1 200"}, {"2020", "中文…"}}),
                 ImageStyle{}});
  return out;
}

}  // namespace support
