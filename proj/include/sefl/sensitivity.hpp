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

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "sefl/errors.hpp"
#include "sefl/packing.hpp"

namespace sefl::sensitivity {

// Non-negative per-parameter privacy scores.
struct SensitivityMap {
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }

  void validate() const {
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!(scores[j] >= 0.0) || !std::isfinite(scores[j])) {
        throw std::invalid_argument("sensitivity score " + std::to_string(j) +
                                    " must be finite and non-negative");
      }
    }
  }
};

enum class Level : std::uint8_t { kPlain = 0, kEncrypt = 1 };

inline const char* to_string(Level level) { return level == Level::kEncrypt ? "ENCRYPT" : "PLAIN"; }

// Encrypt/plain partition of the parameter indices. tau is NaN for masks that
// were supplied directly rather than thresholded.
struct Mask {
  std::vector<Level> levels;
  double tau = std::numeric_limits<double>::quiet_NaN();

  static Mask uniform(std::size_t d, Level level) {
    Mask m;
    m.levels.assign(d, level);
    return m;
  }

  std::size_t size() const { return levels.size(); }

  std::size_t encrypted_count() const {
    return static_cast<std::size_t>(std::count(levels.begin(), levels.end(), Level::kEncrypt));
  }
  std::size_t plain_count() const { return size() - encrypted_count(); }

  std::vector<std::size_t> encrypted_indices() const { return indices(Level::kEncrypt); }
  std::vector<std::size_t> plain_indices() const { return indices(Level::kPlain); }

  friend bool operator==(const Mask& a, const Mask& b) { return a.levels == b.levels; }

 private:
  std::vector<std::size_t> indices(Level level) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < levels.size(); ++j) {
      if (levels[j] == level) out.push_back(j);
    }
    return out;
  }
};

enum class Mode { kAbsWeight, kGradMagnitude };

// abs_weight: |w_j| of the last row (the current weights).
// grad_magnitude: mean |g_j| over all rows of the gradient history.
inline SensitivityMap compute_sensitivity(std::span<const std::vector<double>> history, Mode mode) {
  if (history.empty()) throw std::invalid_argument("sensitivity needs a non-empty history");
  const std::size_t d = history.front().size();
  for (const auto& row : history) {
    if (row.size() != d) throw std::invalid_argument("history rows differ in length");
  }
  SensitivityMap map;
  map.scores.assign(d, 0.0);
  if (mode == Mode::kAbsWeight) {
    for (std::size_t j = 0; j < d; ++j) map.scores[j] = std::fabs(history.back()[j]);
  } else {
    for (const auto& row : history) {
      for (std::size_t j = 0; j < d; ++j) map.scores[j] += std::fabs(row[j]);
    }
    for (auto& s : map.scores) s /= static_cast<double>(history.size());
  }
  return map;
}

inline SensitivityMap abs_weight_scores(std::span<const double> weights) {
  std::vector<std::vector<double>> history{{weights.begin(), weights.end()}};
  return compute_sensitivity(history, Mode::kAbsWeight);
}

// ENCRYPT iff score > tau; ties stay PLAIN.
inline Mask partition(const SensitivityMap& map, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("threshold must be >= 0");
  Mask mask;
  mask.tau = tau;
  mask.levels.resize(map.size());
  for (std::size_t j = 0; j < map.size(); ++j) {
    mask.levels[j] = map.scores[j] > tau ? Level::kEncrypt : Level::kPlain;
  }
  return mask;
}

// Validation gate for externally supplied maps: score_j <= c * risk_j.
inline bool check_monotonicity(const SensitivityMap& map, std::span<const double> risk, double c) {
  if (map.size() != risk.size()) throw std::invalid_argument("score and risk lengths differ");
  if (!(c >= 1.0)) throw std::invalid_argument("constant must be >= 1");
  for (std::size_t j = 0; j < risk.size(); ++j) {
    if (map.scores[j] > c * risk[j]) return false;
  }
  return true;
}

// Scores are quantized to integer levels in [0, 255] before encryption so
// that weighted sums stay far below t.
inline constexpr std::int64_t kMaxLevel = 255;

inline std::vector<std::int64_t> quantize(const SensitivityMap& map, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("quantization step must be positive");
  std::vector<std::int64_t> out(map.size());
  for (std::size_t j = 0; j < map.size(); ++j) {
    out[j] = std::min<std::int64_t>(kMaxLevel, std::llround(map.scores[j] / step));
  }
  return out;
}

// Homomorphic weighted sum of the clients' encrypted level vectors. The
// server never decrypts; the result is broadcast as-is.
inline he::EncryptedVector aggregate_masks_encrypted(std::span<const he::EncryptedVector> vectors,
                                                     std::span<const std::int64_t> weights,
                                                     const he::PublicKey& pk) {
  std::vector<const he::EncryptedVector*> inputs;
  for (const auto& v : vectors) {
    for (const auto& ct : v) {
      if (!ring::same_ring(ct.c0, pk.a)) {
        throw ParameterMismatchError("sensitivity vector not encrypted under this key");
      }
    }
    inputs.push_back(&v);
  }
  for (std::int64_t w : weights) {
    if (w < 0) throw std::invalid_argument("mask weights must be non-negative");
  }
  return he::weighted_sum(inputs, weights);
}

// Client side: decrypt the broadcast sum and convert it back to mean scores.
inline SensitivityMap decrypt_mask_sum(const he::SecretKey& sk, const he::EncryptedVector& sum,
                                       std::size_t d, std::int64_t total_weight, double step) {
  if (total_weight <= 0) throw std::invalid_argument("total weight must be positive");
  auto levels = he::decrypt_packed_integers(sk, sum, d);
  SensitivityMap map;
  map.scores.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    map.scores[j] = static_cast<double>(levels[j]) * step / static_cast<double>(total_weight);
  }
  return map;
}

inline Mask filter_mask(const SensitivityMap& decrypted_sum, double tau) {
  return partition(decrypted_sum, tau);
}

// ---- mask files ----
// One "index score level" record per line; '#' starts a comment. An optional
// "# tau <value>" line records the threshold and is checked on load.

inline void write_mask_file(std::ostream& out, const SensitivityMap& map, const Mask& mask) {
  if (map.size() != mask.size()) throw std::invalid_argument("map and mask sizes differ");
  out.precision(17);
  if (!std::isnan(mask.tau)) out << "# tau " << mask.tau << "\n";
  for (std::size_t j = 0; j < map.size(); ++j) {
    out << j << ' ' << map.scores[j] << ' ' << to_string(mask.levels[j]) << '\n';
  }
}

struct MaskFile {
  SensitivityMap map;
  Mask mask;
};

inline MaskFile read_mask_file(std::istream& in) {
  MaskFile f;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first[0] == '#') {
      std::string key;
      double value;
      if (first == "#" && (ls >> key) && key == "tau" && (ls >> value)) f.mask.tau = value;
      continue;
    }
    std::size_t index;
    double score;
    std::string level;
    std::istringstream rec(line);
    if (!(rec >> index >> score >> level)) {
      throw FormatError("mask file line " + std::to_string(line_no) + ": expected 'index score level'");
    }
    if (index != f.map.scores.size()) {
      throw FormatError("mask file line " + std::to_string(line_no) + ": indices must be 0..d-1 in order");
    }
    Level lv;
    if (level == "ENCRYPT") {
      lv = Level::kEncrypt;
    } else if (level == "PLAIN") {
      lv = Level::kPlain;
    } else {
      throw FormatError("mask file line " + std::to_string(line_no) + ": unknown level '" + level + "'");
    }
    f.map.scores.push_back(score);
    f.mask.levels.push_back(lv);
  }
  try {
    f.map.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("mask file: ") + e.what());
  }
  if (!std::isnan(f.mask.tau) && !(partition(f.map, f.mask.tau) == f.mask)) {
    throw FormatError("mask file levels disagree with its recorded tau");
  }
  return f;
}

}  // namespace sefl::sensitivity
