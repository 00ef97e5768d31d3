#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "tabdpo/errors.hpp"
#include "tabdpo/model_client.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo {

namespace {

constexpr std::string_view kGoldToken = "{gold}";

AnswerDistribution distribution_from_json(const nlohmann::json& v, const std::string& where) {
  AnswerDistribution d;
  if (v.is_array()) {
    for (const auto& a : v) {
      if (!a.is_string()) throw DistributionError(where + ": script entries must be strings");
      d.script.push_back(a.get<std::string>());
    }
    return d;
  }
  if (!v.is_object()) throw DistributionError(where + ": expected an object or an array");
  for (const auto& [answer, p] : v.items()) {
    if (!p.is_number()) throw DistributionError(where + ": probability must be a number");
    d.weights.emplace_back(answer, p.get<double>());
  }
  std::sort(d.weights.begin(), d.weights.end());
  return d;
}

std::map<Modality, AnswerDistribution> arms_from_json(const nlohmann::json& obj,
                                                      const std::string& where) {
  if (!obj.is_object()) throw DistributionError(where + ": expected an object");
  std::map<Modality, AnswerDistribution> arms;
  for (const auto& [name, v] : obj.items()) {
    const auto m = parse_modality(name);
    if (!m) throw DistributionError(where + ": unknown modality '" + name + "'");
    arms[*m] = distribution_from_json(v, where + "." + name);
  }
  return arms;
}

void check(const AnswerDistribution& d, const std::string& where) {
  if (!d.script.empty()) return;
  if (d.weights.empty()) throw DistributionError(where + ": empty distribution");
  double sum = 0.0;
  for (const auto& [answer, p] : d.weights) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw DistributionError(where + ": probability of '" + answer + "' is invalid");
    }
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw DistributionError(where + ": probabilities sum to " + std::to_string(sum));
  }
}

const std::string& mode_of(const AnswerDistribution& d) {
  if (!d.script.empty()) return d.script.front();
  const auto* best = &d.weights.front();
  for (const auto& w : d.weights) {
    if (w.second > best->second) best = &w;
  }
  return best->first;
}

}  // namespace

MockProfile MockProfile::from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DistributionError(std::string("mock profile: ") + e.what());
  }
  MockProfile profile;
  if (j.contains("default")) profile.defaults = arms_from_json(j["default"], "default");
  if (j.contains("instances")) {
    for (const auto& [id, arms] : j["instances"].items()) {
      profile.per_instance[id] = arms_from_json(arms, "instances." + id);
    }
  }
  return profile;
}

MockModel::MockModel(MockProfile profile, std::uint64_t seed)
    : profile_(std::move(profile)), seed_(seed) {
  for (const auto& [m, d] : profile_.defaults) check(d, "default." + std::string(to_string(m)));
  for (const auto& [id, arms] : profile_.per_instance) {
    for (const auto& [m, d] : arms) check(d, id + "." + std::string(to_string(m)));
  }
}

const AnswerDistribution& MockModel::lookup(const std::string& instance_id,
                                            Modality modality) const {
  if (const auto it = profile_.per_instance.find(instance_id); it != profile_.per_instance.end()) {
    if (const auto arm = it->second.find(modality); arm != it->second.end()) return arm->second;
  }
  if (const auto arm = profile_.defaults.find(modality); arm != profile_.defaults.end()) {
    return arm->second;
  }
  throw DistributionError("mock profile has no " + std::string(to_string(modality)) +
                          " distribution for " + instance_id);
}

std::vector<Completion> MockModel::complete(const ChatRequest& request) {
  ++calls_;
  const AnswerDistribution& dist = lookup(request.instance_id, request.modality);
  std::mt19937_64 rng(util::mix_seed({seed_, util::fnv1a64(request.instance_id),
                                      static_cast<std::uint64_t>(request.modality)}));
  rng.discard(static_cast<unsigned long long>(request.first_sample));

  std::vector<Completion> out;
  out.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i) {
    const int index = request.first_sample + i;
    const std::string* answer = nullptr;
    if (request.temperature == 0.0) {
      answer = &mode_of(dist);
    } else if (!dist.script.empty()) {
      answer = &dist.script[static_cast<std::size_t>(index) % dist.script.size()];
    } else {
      const double u = util::unit_interval(rng());
      double cumulative = 0.0;
      answer = &dist.weights.back().first;
      for (const auto& [a, p] : dist.weights) {
        cumulative += p;
        if (u < cumulative) {
          answer = &a;
          break;
        }
      }
    }
    const std::string& text = *answer == kGoldToken ? request.gold_hint : *answer;
    out.push_back({"Reading the table to answer the question.\n" + request.answer_anchor + " " + text,
                   0});
  }
  return out;
}

std::string MockModel::describe() const { return "mock(seed=" + std::to_string(seed_) + ")"; }

std::unique_ptr<MockModel> mock_sampler(MockProfile profile, std::uint64_t seed) {
  return std::make_unique<MockModel>(std::move(profile), seed);
}

}  // namespace tabdpo
