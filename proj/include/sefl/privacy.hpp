/*
 * Copyright 2026 The SEFL Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "sefl/random.hpp"
#include "sefl/sensitivity.hpp"

namespace sefl::privacy {

enum class Mechanism { kGaussian, kLaplace };

struct DpParams {
  double epsilon = 1.0;
  double delta = 1e-5;
  double clip_norm = 10.0;
  Mechanism mechanism = Mechanism::kGaussian;
  double sensitivity = 1.0;
  // Noise multiplier applied to PLAIN coordinates relative to ENCRYPT ones.
  double plain_noise_ratio = 1.0;
  // Scale each coordinate's noise by its score over the mean score.
  bool scale_by_sensitivity = false;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) throw std::invalid_argument("clip_norm must be > 0");
    if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in [0, 1)");
    if (mechanism == Mechanism::kGaussian && !(delta > 0.0)) {
      throw std::invalid_argument("the Gaussian mechanism requires delta > 0");
    }
    if (!(sensitivity > 0.0) || !std::isfinite(sensitivity)) throw std::invalid_argument("sensitivity must be > 0");
    if (!(plain_noise_ratio >= 0.0) || !std::isfinite(plain_noise_ratio)) {
      throw std::invalid_argument("plain_noise_ratio must be >= 0");
    }
  }

  // Gaussian sigma or Laplace scale b; both are sensitivity / epsilon.
  double noise_scale() const { return sensitivity / epsilon; }
};

// Per-example L2 sensitivity of a mean over batch_size clipped gradients.
inline double sensitivity_from_clip(double clip_norm, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  return clip_norm / static_cast<double>(batch_size);
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline std::vector<double> clip_update(std::span<const double> update, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
  std::vector<double> out(update.begin(), update.end());
  const double norm = l2_norm(update);
  if (norm > clip_norm) {
    const double f = clip_norm / norm;
    for (double& x : out) x *= f;
    // Rounding can leave the norm a hair above C; shrink once more if so.
    if (l2_norm(out) > clip_norm) {
      for (double& x : out) x *= (1.0 - 0x1p-50);
    }
  }
  return out;
}

// Client-side perturbation before encryption. scores is consulted only when
// dp.scale_by_sensitivity is set.
inline std::vector<double> add_dp_noise(std::span<const double> update, const DpParams& dp,
                                        const sensitivity::Mask& mask, Prng& rng,
                                        const sensitivity::SensitivityMap* scores = nullptr) {
  dp.validate();
  if (mask.size() != update.size()) throw std::invalid_argument("mask and update lengths differ");
  std::vector<double> out(update.begin(), update.end());
  const double scale = dp.noise_scale();
  if (scale == 0.0) return out;

  double mean_score = 0.0;
  if (dp.scale_by_sensitivity) {
    if (scores == nullptr || scores->size() != update.size()) {
      throw std::invalid_argument("sensitivity-scaled noise needs one score per coordinate");
    }
    for (double s : scores->scores) mean_score += s;
    mean_score /= static_cast<double>(std::max<std::size_t>(1, update.size()));
  }

  for (std::size_t j = 0; j < out.size(); ++j) {
    double s = scale;
    if (mask.levels[j] == sensitivity::Level::kPlain) s *= dp.plain_noise_ratio;
    if (dp.scale_by_sensitivity && mean_score > 0.0) s *= scores->scores[j] / mean_score;
    if (s == 0.0) continue;
    out[j] += dp.mechanism == Mechanism::kGaussian ? s * rng.gaussian() : rng.laplace(s);
  }
  return out;
}

struct Budget {
  double epsilon = 0.0;
  double delta = 0.0;
};

// sqrt(2K ln(1/delta)) * eps + K * eps * (e^eps - 1).
inline double compose_advanced(double epsilon, double delta, std::uint64_t rounds) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::domain_error("epsilon must be finite and > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("delta must lie in (0, 1)");
  if (rounds == 0) throw std::domain_error("at least one round is required");
  const double k = static_cast<double>(rounds);
  return std::sqrt(2.0 * k * std::log(1.0 / delta)) * epsilon + k * epsilon * std::expm1(epsilon);
}

// Append-only per-round spending log owned by the training driver.
class PrivacyLedger {
 public:
  // delta_target is the slack of the advanced bound.
  explicit PrivacyLedger(double delta_target = 1e-5) : delta_target_(delta_target) {
    if (!(delta_target > 0.0 && delta_target < 1.0)) throw std::invalid_argument("delta_target must lie in (0, 1)");
  }

  void record(double epsilon, double delta) {
    if (!(epsilon > 0.0) || !(delta >= 0.0 && delta < 1.0)) {
      throw std::invalid_argument("per-round budget out of range");
    }
    per_round_.push_back({epsilon, delta});
  }
  void record(const DpParams& dp) { record(dp.epsilon, dp.delta); }

  std::size_t rounds_executed() const { return per_round_.size(); }
  const std::vector<Budget>& per_round() const { return per_round_; }
  double delta_target() const { return delta_target_; }

  Budget composed_basic() const { return basic_prefix(per_round_.size()); }
  Budget composed_advanced() const { return advanced_prefix(per_round_.size()); }

  // One JSON object per round carrying running totals up to that round.
  void export_jsonl(std::ostream& out) const {
    for (std::size_t r = 0; r < per_round_.size(); ++r) {
      const Budget basic = basic_prefix(r + 1);
      const Budget adv = advanced_prefix(r + 1);
      nlohmann::json rec = {
          {"round", r + 1},
          {"epsilon", per_round_[r].epsilon},
          {"delta", per_round_[r].delta},
          {"basic_total", {{"epsilon", basic.epsilon}, {"delta", basic.delta}}},
          {"advanced_total", {{"epsilon", adv.epsilon}, {"delta", adv.delta}}},
      };
      out << rec.dump() << '\n';
    }
  }

  Budget basic_prefix(std::size_t k) const {
    Budget b;
    for (std::size_t i = 0; i < k; ++i) {
      b.epsilon += per_round_[i].epsilon;
      b.delta += per_round_[i].delta;
    }
    return b;
  }

  // Uses the largest per-round epsilon, so non-uniform logs stay covered.
  Budget advanced_prefix(std::size_t k) const {
    if (k == 0) return {};
    double eps = 0.0;
    double delta = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      eps = std::max(eps, per_round_[i].epsilon);
      delta += per_round_[i].delta;
    }
    return {compose_advanced(eps, delta_target_, k), delta + delta_target_};
  }

 private:
  double delta_target_;
  std::vector<Budget> per_round_;
};

inline Budget compose_basic(const PrivacyLedger& ledger) {
  if (ledger.rounds_executed() == 0) throw std::invalid_argument("ledger is empty");
  return ledger.composed_basic();
}

}  // namespace sefl::privacy
