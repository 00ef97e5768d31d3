#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tabdpo::dpo {

// Sequence log-likelihoods of the chosen (pos) and rejected (neg) responses
// under the trained policy and the frozen reference model.
struct BatchPoint {
  double logp_pos_policy = 0.0;
  double logp_pos_ref = 0.0;
  double logp_neg_policy = 0.0;
  double logp_neg_ref = 0.0;
  std::string pair_id;
  // Provenance only; the loss does not depend on it.
  std::optional<std::string> modality;

  // Throws NonFiniteError unless all four values are finite and <= 0.
  void validate() const;
};

struct Config {
  double beta = 0.1;
  void validate() const;
};

// 1 / (1 + e^-x), evaluated on the branch that cannot overflow.
double sigmoid(double x) noexcept;

// log(1 + e^x) without overflow or loss of precision for large |x|.
double softplus(double x) noexcept;

// Preference margin: (pos_policy - pos_ref) - (neg_policy - neg_ref).
double margin(const BatchPoint& p) noexcept;

// -log sigmoid(beta * margin) = softplus(-beta * margin). Throws
// NonFiniteError on invalid input.
double loss(const BatchPoint& point, const Config& cfg);

// Same value from a raw margin, no validation. Used by the finite-difference
// checker where perturbed log-probabilities may leave the valid range.
double loss_from_margin(double delta, double beta) noexcept;

// d loss / d (pos_policy, pos_ref, neg_policy, neg_ref).
using Gradient = std::array<double, 4>;
Gradient gradient(const BatchPoint& point, const Config& cfg);

struct BatchSummary {
  double mean_loss = 0.0;
  std::vector<double> losses;
  double mean_scaled_margin = 0.0;  // mean of beta * margin
  double fraction_positive = 0.0;   // share of points with margin > 0
};

// Throws EmptyInputError on an empty batch.
BatchSummary batch(std::span<const BatchPoint> points, const Config& cfg);

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double max_relative_error = 0.0;
  std::string worst_pair_id;
  bool passed() const { return failures == 0; }
};

// Compares gradient() with central differences of the loss, step `h`, for
// every coordinate of every point. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|) (0 when both are 0).
GradientCheck check_gradients(std::span<const BatchPoint> points, const Config& cfg,
                              double step = 1e-6, double tolerance = 1e-6);

// JSONL, one object per line with the four log-probabilities, pair_id and an
// optional modality. Throws ParseError with the 1-based line number.
std::vector<BatchPoint> parse_points(std::string_view jsonl);
std::string point_to_json(const BatchPoint& point);

}  // namespace tabdpo::dpo
