#include "tabdpo/dpo.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

#include "tabdpo/errors.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo::dpo {

void BatchPoint::validate() const {
  const double values[] = {logp_pos_policy, logp_pos_ref, logp_neg_policy, logp_neg_ref};
  for (double v : values) {
    if (!std::isfinite(v)) throw NonFiniteError(pair_id + ": log-probability is not finite");
    if (v > 0.0) throw NonFiniteError(pair_id + ": log-probability is positive");
  }
}

void Config::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta", "must be a positive finite number");
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double margin(const BatchPoint& p) noexcept {
  return (p.logp_pos_policy - p.logp_pos_ref) - (p.logp_neg_policy - p.logp_neg_ref);
}

double loss_from_margin(double delta, double beta) noexcept { return softplus(-beta * delta); }

double loss(const BatchPoint& point, const Config& cfg) {
  point.validate();
  cfg.validate();
  return loss_from_margin(margin(point), cfg.beta);
}

Gradient gradient(const BatchPoint& point, const Config& cfg) {
  point.validate();
  cfg.validate();
  const double g = cfg.beta * sigmoid(-cfg.beta * margin(point));
  return {-g, +g, +g, -g};
}

BatchSummary batch(std::span<const BatchPoint> points, const Config& cfg) {
  if (points.empty()) throw EmptyInputError("empty DPO batch");
  BatchSummary s;
  s.losses.reserve(points.size());
  double sum_loss = 0.0, sum_margin = 0.0;
  std::size_t positive = 0;
  for (const auto& p : points) {
    s.losses.push_back(loss(p, cfg));
    sum_loss += s.losses.back();
    const double d = margin(p);
    sum_margin += cfg.beta * d;
    if (d > 0.0) ++positive;
  }
  const auto n = static_cast<double>(points.size());
  s.mean_loss = sum_loss / n;
  s.mean_scaled_margin = sum_margin / n;
  s.fraction_positive = static_cast<double>(positive) / n;
  return s;
}

GradientCheck check_gradients(std::span<const BatchPoint> points, const Config& cfg, double step,
                              double tolerance) {
  GradientCheck result;
  for (const auto& p : points) {
    const Gradient analytic = gradient(p, cfg);
    for (int k = 0; k < 4; ++k) {
      BatchPoint up = p, down = p;
      double* coord_up[] = {&up.logp_pos_policy, &up.logp_pos_ref, &up.logp_neg_policy,
                            &up.logp_neg_ref};
      double* coord_down[] = {&down.logp_pos_policy, &down.logp_pos_ref, &down.logp_neg_policy,
                              &down.logp_neg_ref};
      *coord_up[k] += step;
      *coord_down[k] -= step;
      // Divide by the step actually taken after rounding.
      const double taken = *coord_up[k] - *coord_down[k];
      const double numeric =
          (loss_from_margin(margin(up), cfg.beta) - loss_from_margin(margin(down), cfg.beta)) /
          taken;
      const double scale = std::max(std::fabs(analytic[k]), std::fabs(numeric));
      const double rel = scale == 0.0 ? 0.0 : std::fabs(analytic[k] - numeric) / scale;
      ++result.checked;
      if (!(rel < tolerance)) ++result.failures;
      if (rel > result.max_relative_error || !std::isfinite(rel)) {
        result.max_relative_error = rel;
        result.worst_pair_id = p.pair_id;
      }
    }
  }
  return result;
}

std::vector<BatchPoint> parse_points(std::string_view jsonl) {
  std::vector<BatchPoint> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const std::string_view line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (util::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError(line_no, "not a JSON object");
    }
    if (!j.is_object()) throw ParseError(line_no, "not a JSON object");
    BatchPoint p;
    const auto number = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_number()) {
        throw ParseError(line_no, std::string("missing numeric field '") + key + "'");
      }
      return j[key].get<double>();
    };
    p.logp_pos_policy = number("logp_pos_policy");
    p.logp_pos_ref = number("logp_pos_ref");
    p.logp_neg_policy = number("logp_neg_policy");
    p.logp_neg_ref = number("logp_neg_ref");
    p.pair_id = j.value("pair_id", "line-" + std::to_string(line_no));
    if (j.contains("modality") && j["modality"].is_string()) {
      p.modality = j["modality"].get<std::string>();
    }
    try {
      p.validate();
    } catch (const NonFiniteError& e) {
      throw ParseError(line_no, e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string point_to_json(const BatchPoint& point) {
  nlohmann::ordered_json j;
  j["pair_id"] = point.pair_id;
  j["logp_pos_policy"] = point.logp_pos_policy;
  j["logp_pos_ref"] = point.logp_pos_ref;
  j["logp_neg_policy"] = point.logp_neg_policy;
  j["logp_neg_ref"] = point.logp_neg_ref;
  if (point.modality) j["modality"] = *point.modality;
  return j.dump();
}

}  // namespace tabdpo::dpo
