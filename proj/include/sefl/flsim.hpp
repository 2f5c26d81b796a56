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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sefl/aggregate.hpp"
#include "sefl/privacy.hpp"
#include "sefl/profiles.hpp"

namespace sefl::flsim {

// ---- data ----

struct Sample {
  std::vector<double> x;
  int y = 0;
};

using Dataset = std::vector<Sample>;

// Two Gaussian blobs at +/- separation/2 along a random unit direction, unit
// variance per feature. The last coordinate is a constant 1 bias feature, so
// dim counts it.
inline Dataset generate_blobs(std::size_t samples, std::size_t dim, double separation, Prng& rng) {
  if (dim < 2) throw std::invalid_argument("blob dimension must be >= 2");
  std::vector<double> dir(dim - 1);
  double norm = 0.0;
  for (auto& v : dir) {
    v = rng.gaussian();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : dir) v /= norm;
  Dataset out(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    Sample& s = out[i];
    s.y = static_cast<int>(i % 2);
    const double sign = s.y == 1 ? 0.5 : -0.5;
    s.x.resize(dim);
    for (std::size_t j = 0; j + 1 < dim; ++j) s.x[j] = sign * separation * dir[j] + rng.gaussian();
    s.x[dim - 1] = 1.0;
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

enum class PartitionMode { kIid, kLabelSkew };

struct PartitionSpec {
  std::size_t n_clients = 1;
  PartitionMode mode = PartitionMode::kIid;
  double skew_alpha = 0.5;
  std::uint64_t seed = 0;
};

inline std::vector<Dataset> partition_data(const Dataset& data, const PartitionSpec& spec) {
  const std::size_t k = spec.n_clients;
  if (k == 0) throw std::invalid_argument("need at least one client");
  if (data.size() < k) {
    throw std::invalid_argument("cannot split " + std::to_string(data.size()) + " samples across " +
                                std::to_string(k) + " clients");
  }
  Prng rng = Prng(spec.seed).fork("sefl.partition");
  std::vector<std::vector<std::size_t>> assign(k);
  if (spec.mode == PartitionMode::kIid) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < idx.size(); ++i) assign[i * k / idx.size()].push_back(idx[i]);
  } else {
    if (!(spec.skew_alpha > 0.0)) throw std::invalid_argument("skew_alpha must be > 0");
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < data.size(); ++i) by_label[data[i].y].push_back(i);
    std::gamma_distribution<double> gamma(spec.skew_alpha, 1.0);
    for (auto& [label, idx] : by_label) {
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<double> p(k);
      double sum = 0.0;
      for (auto& v : p) sum += (v = gamma(rng));
      // Cumulative rounding keeps every sample assigned exactly once.
      double cum = 0.0;
      std::size_t begin = 0;
      for (std::size_t c = 0; c < k; ++c) {
        cum += sum > 0.0 ? p[c] / sum : 1.0 / static_cast<double>(k);
        const std::size_t end =
            c + 1 == k ? idx.size() : std::min(idx.size(), static_cast<std::size_t>(std::llround(cum * idx.size())));
        for (std::size_t i = begin; i < std::max(begin, end); ++i) assign[c].push_back(idx[i]);
        begin = std::max(begin, end);
      }
    }
    // No client may end up empty.
    for (std::size_t c = 0; c < k; ++c) {
      if (!assign[c].empty()) continue;
      auto donor = std::max_element(assign.begin(), assign.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
      assign[c].push_back(donor->back());
      donor->pop_back();
    }
  }
  std::vector<Dataset> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::sort(assign[c].begin(), assign[c].end());
    for (std::size_t i : assign[c]) out[c].push_back(data[i]);
  }
  return out;
}

// ---- logistic model ----

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Mean logistic cross-entropy, log(1 + e^z) - y*z per sample.
inline double local_objective(std::span<const double> w, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("objective of an empty dataset");
  double total = 0.0;
  for (const Sample& s : data) {
    if (s.x.size() != w.size()) throw std::invalid_argument("sample and model dimensions differ");
    const double z = dot(w, s.x);
    total += std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))) - s.y * z;
  }
  return total / static_cast<double>(data.size());
}

template <typename It>
std::vector<double> mean_gradient(std::span<const double> w, It begin, It end) {
  std::vector<double> g(w.size(), 0.0);
  std::size_t count = 0;
  for (It it = begin; it != end; ++it, ++count) {
    const Sample& s = *it;
    const double r = sigmoid(dot(w, s.x)) - s.y;
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += r * s.x[j];
  }
  for (auto& v : g) v /= static_cast<double>(std::max<std::size_t>(1, count));
  return g;
}

inline std::vector<double> gradient(std::span<const double> w, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("gradient of an empty dataset");
  return mean_gradient(w, data.begin(), data.end());
}

inline double accuracy(std::span<const double> w, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Sample& s : data) correct += (dot(w, s.x) > 0.0 ? 1 : 0) == s.y;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Seeded mini-batch SGD from w0; returns w_local - w0. batch_size 0 means
// full batch.
inline std::vector<double> sgd(std::span<const double> w0, const Dataset& data, std::size_t epochs,
                               double lr, std::size_t batch_size, Prng& rng) {
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  std::vector<double> w(w0.begin(), w0.end());
  const std::size_t b = batch_size == 0 ? data.size() : std::min(batch_size, data.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample const*> batch;
  for (std::size_t e = 0; e < epochs; ++e) {
    if (b < data.size()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += b) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + b); ++i) batch.push_back(&data[order[i]]);
      std::vector<double> g(w.size(), 0.0);
      for (const Sample* s : batch) {
        const double r = sigmoid(dot(w, s->x)) - s->y;
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += r * s->x[j];
      }
      const double step = lr / static_cast<double>(batch.size());
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= step * g[j];
    }
  }
  for (std::size_t j = 0; j < w.size(); ++j) w[j] -= w0[j];
  return w;
}

// ---- configuration ----

enum class EncryptMode { kSelective, kFull, kOff };

struct FLConfig {
  std::string profile = "desk4096";
  std::size_t clients = 4;
  PartitionMode partition = PartitionMode::kIid;
  double skew_alpha = 0.5;
  std::size_t samples = 800;
  std::size_t val_samples = 200;
  std::size_t dim = 100;
  double separation = 3.0;
  std::size_t rounds = 50;
  std::size_t epochs = 1;
  double lr = 0.1;
  std::size_t batch_size = 32;
  EncryptMode encrypt = EncryptMode::kSelective;
  sensitivity::Mode sensitivity_mode = sensitivity::Mode::kGradMagnitude;
  double tau = 0.01;
  double sens_step = 0.001;
  std::size_t mask_refresh_every = 10;
  bool dp = true;
  privacy::DpParams dp_params;
  double delta_target = 1e-5;
  bool audit = true;
  double audit_beta = 0.0;  // 0 selects 2 * clip_norm
  double audit_fraction = 0.1;
  int scale_bits = 0;        // 0 selects the largest safe scale
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 0;  // 0 reuses seed
  bool early_stop = false;
  bool report_timing = false;
  int tamper_client = -1;
  double tamper_scale = 100.0;

  double effective_beta() const { return audit_beta > 0.0 ? audit_beta : 2.0 * dp_params.clip_norm; }
  std::uint64_t effective_data_seed() const { return data_seed != 0 ? data_seed : seed; }

  // Largest |coordinate| a client may upload: the clip bound plus a tail
  // bound on the noise (8 sigma Gaussian, 40 b Laplace).
  double coordinate_bound() const {
    double bound = dp_params.clip_norm;
    if (dp) {
      double s = dp_params.noise_scale() * std::max(1.0, dp_params.plain_noise_ratio);
      if (dp_params.scale_by_sensitivity) s *= static_cast<double>(dim);
      bound += (dp_params.mechanism == privacy::Mechanism::kGaussian ? 8.0 : 40.0) * s;
    }
    return bound;
  }

  // Scale such that sum_i |D_i| * bound * 2^s stays below t/2.
  int effective_scale_bits(u64 t) const {
    if (scale_bits > 0) return scale_bits;
    const double limit = static_cast<double>(t) / 2.0 / (static_cast<double>(samples) * coordinate_bound());
    return std::min(30, static_cast<int>(std::floor(std::log2(limit))) - 1);
  }

  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_string() const;
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value '" + value + "' for " + key);
  if constexpr (std::is_unsigned_v<T>) {
    if (!value.empty() && value[0] == '-') throw ConfigError(key + " must be non-negative");
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& value) {
  if (value == "inf" || value == "+inf") return std::numeric_limits<double>::infinity();
  return parse_number<double>(key, value);
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1" || value == "yes") return true;
  if (value == "off" || value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean '" + value + "' for " + key);
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void FLConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  using detail::parse_real;
  if (key == "profile") {
    profile = value;
  } else if (key == "clients" || key == "n_clients") {
    clients = parse_number<std::size_t>(key, value);
  } else if (key == "partition") {
    if (value == "iid") {
      partition = PartitionMode::kIid;
    } else if (value == "label_skew") {
      partition = PartitionMode::kLabelSkew;
    } else {
      throw ConfigError("partition must be iid or label_skew");
    }
  } else if (key == "skew_alpha") {
    skew_alpha = parse_real(key, value);
  } else if (key == "samples") {
    samples = parse_number<std::size_t>(key, value);
  } else if (key == "val_samples") {
    val_samples = parse_number<std::size_t>(key, value);
  } else if (key == "dim") {
    dim = parse_number<std::size_t>(key, value);
  } else if (key == "separation") {
    separation = parse_real(key, value);
  } else if (key == "rounds" || key == "T") {
    rounds = parse_number<std::size_t>(key, value);
  } else if (key == "epochs") {
    epochs = parse_number<std::size_t>(key, value);
  } else if (key == "lr") {
    lr = parse_real(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_number<std::size_t>(key, value);
  } else if (key == "encrypt" || key == "mode") {
    if (value == "selective") {
      encrypt = EncryptMode::kSelective;
    } else if (value == "full") {
      encrypt = EncryptMode::kFull;
    } else if (value == "off" || value == "plaintext") {
      encrypt = EncryptMode::kOff;
    } else {
      throw ConfigError("encrypt must be selective, full or off");
    }
  } else if (key == "sensitivity_mode") {
    if (value == "grad_magnitude") {
      sensitivity_mode = sensitivity::Mode::kGradMagnitude;
    } else if (value == "abs_weight") {
      sensitivity_mode = sensitivity::Mode::kAbsWeight;
    } else {
      throw ConfigError("sensitivity_mode must be grad_magnitude or abs_weight");
    }
  } else if (key == "tau") {
    tau = parse_real(key, value);
  } else if (key == "sens_step") {
    sens_step = parse_real(key, value);
  } else if (key == "mask_refresh_every") {
    mask_refresh_every = parse_number<std::size_t>(key, value);
  } else if (key == "dp") {
    dp = parse_bool(key, value);
  } else if (key == "epsilon") {
    dp_params.epsilon = parse_real(key, value);
  } else if (key == "delta") {
    dp_params.delta = parse_real(key, value);
  } else if (key == "clip_norm") {
    dp_params.clip_norm = parse_real(key, value);
  } else if (key == "mechanism") {
    if (value == "gaussian") {
      dp_params.mechanism = privacy::Mechanism::kGaussian;
    } else if (value == "laplace") {
      dp_params.mechanism = privacy::Mechanism::kLaplace;
    } else {
      throw ConfigError("mechanism must be gaussian or laplace");
    }
  } else if (key == "dp_sensitivity") {
    dp_params.sensitivity = parse_real(key, value);
  } else if (key == "plain_noise_ratio") {
    dp_params.plain_noise_ratio = parse_real(key, value);
  } else if (key == "dp_scale_by_sensitivity") {
    dp_params.scale_by_sensitivity = parse_bool(key, value);
  } else if (key == "delta_target") {
    delta_target = parse_real(key, value);
  } else if (key == "audit") {
    audit = parse_bool(key, value);
  } else if (key == "audit_beta") {
    audit_beta = parse_real(key, value);
  } else if (key == "audit_fraction") {
    audit_fraction = parse_real(key, value);
  } else if (key == "scale_bits") {
    scale_bits = parse_number<int>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "data_seed") {
    data_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "early_stop") {
    early_stop = parse_bool(key, value);
  } else if (key == "report_timing") {
    report_timing = parse_bool(key, value);
  } else if (key == "tamper_client") {
    tamper_client = parse_number<int>(key, value);
  } else if (key == "tamper_scale") {
    tamper_scale = parse_real(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

inline void FLConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError(why); };
  const RingProfile prof = ring_profile(profile);
  if (clients == 0) fail("clients must be >= 1");
  if (samples < clients) fail("samples must be >= clients");
  if (dim < 2) fail("dim must be >= 2");
  if (epochs == 0) fail("epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (!(separation >= 0.0)) fail("separation must be >= 0");
  if (partition == PartitionMode::kLabelSkew && !(skew_alpha > 0.0)) fail("skew_alpha must be > 0");
  if (!(tau >= 0.0)) fail("tau must be >= 0");
  if (!(sens_step > 0.0)) fail("sens_step must be > 0");
  if (mask_refresh_every == 0) fail("mask_refresh_every must be >= 1");
  if (!(delta_target > 0.0 && delta_target < 1.0)) fail("delta_target must lie in (0, 1)");
  if (!(audit_fraction > 0.0 && audit_fraction <= 1.0)) fail("audit_fraction must lie in (0, 1]");
  if (!(audit_beta >= 0.0)) fail("audit_beta must be >= 0");
  if (scale_bits < 0 || scale_bits > 60) fail("scale_bits must lie in [0, 60]");
  if (tamper_client >= static_cast<int>(clients)) fail("tamper_client out of range");
  try {
    privacy::DpParams p = dp_params;
    if (!dp) p.epsilon = std::max(p.epsilon, 1.0);
    p.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (encrypt != EncryptMode::kOff) {
    const double t = static_cast<double>(prof.params.t);
    const int s = effective_scale_bits(prof.params.t);
    if (s < 1) fail("plaintext modulus too small for " + std::to_string(samples) + " samples at this clip norm");
    const double worst = static_cast<double>(samples) * coordinate_bound() * std::ldexp(1.0, s);
    if (!(worst < t / 2.0)) {
      fail("aggregate of " + std::to_string(samples) + " weighted samples at scale 2^" + std::to_string(s) +
           " overflows t/2");
    }
    if (encrypt == EncryptMode::kSelective) {
      const double worst_level = static_cast<double>(samples) * static_cast<double>(sensitivity::kMaxLevel);
      if (!(worst_level < t / 2.0)) fail("sensitivity aggregate overflows t/2");
    }
  }
}

inline std::string FLConfig::to_string() const {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "on" : "off"; };
  o << "profile=" << profile << "\nclients=" << clients
    << "\npartition=" << (partition == PartitionMode::kIid ? "iid" : "label_skew")
    << "\nskew_alpha=" << detail::fmt(skew_alpha) << "\nsamples=" << samples << "\nval_samples=" << val_samples
    << "\ndim=" << dim << "\nseparation=" << detail::fmt(separation) << "\nrounds=" << rounds
    << "\nepochs=" << epochs << "\nlr=" << detail::fmt(lr) << "\nbatch_size=" << batch_size << "\nencrypt="
    << (encrypt == EncryptMode::kSelective ? "selective" : encrypt == EncryptMode::kFull ? "full" : "off")
    << "\nsensitivity_mode="
    << (sensitivity_mode == sensitivity::Mode::kGradMagnitude ? "grad_magnitude" : "abs_weight")
    << "\ntau=" << detail::fmt(tau) << "\nsens_step=" << detail::fmt(sens_step)
    << "\nmask_refresh_every=" << mask_refresh_every << "\ndp=" << b(dp)
    << "\nepsilon=" << detail::fmt(dp_params.epsilon) << "\ndelta=" << detail::fmt(dp_params.delta)
    << "\nclip_norm=" << detail::fmt(dp_params.clip_norm)
    << "\nmechanism=" << (dp_params.mechanism == privacy::Mechanism::kGaussian ? "gaussian" : "laplace")
    << "\ndp_sensitivity=" << detail::fmt(dp_params.sensitivity)
    << "\nplain_noise_ratio=" << detail::fmt(dp_params.plain_noise_ratio)
    << "\ndp_scale_by_sensitivity=" << b(dp_params.scale_by_sensitivity)
    << "\ndelta_target=" << detail::fmt(delta_target) << "\naudit=" << b(audit)
    << "\naudit_beta=" << detail::fmt(audit_beta) << "\naudit_fraction=" << detail::fmt(audit_fraction)
    << "\nscale_bits=" << scale_bits << "\nseed=" << seed << "\ndata_seed=" << data_seed
    << "\nearly_stop=" << b(early_stop) << "\nreport_timing=" << b(report_timing)
    << "\ntamper_client=" << tamper_client << "\ntamper_scale=" << detail::fmt(tamper_scale) << "\n";
  return o.str();
}

// Flat "key = value" lines; '#' starts a comment.
inline FLConfig parse_config(std::istream& in, FLConfig base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

// ---- participants ----

struct ClientState {
  std::string client_id;
  Dataset dataset;
  std::vector<double> model;
  std::shared_ptr<const he::KeyPair> keys;
  privacy::DpParams dp;
  Prng rng{0};
  std::vector<std::vector<double>> gradient_history;
  sensitivity::Mask mask;
  std::uint64_t mask_version = 0;

  std::int64_t weight() const { return static_cast<std::int64_t>(dataset.size()); }
};

struct ServerState {
  he::PublicKey pk;
  std::uint64_t round = 0;
  sensitivity::Mask mask;
  std::uint64_t mask_version = 0;
  std::optional<aggregate::GlobalModelRef> global;
  std::vector<aggregate::TranscriptRecord> last_records;
  std::string transcript;  // JSON lines
};

namespace detail {

// Re-raises a library error with the client and stage prefixed.
template <typename Fn>
auto staged(const std::string& who, const char* stage, Fn&& fn) {
  const std::string tag = who + " [" + stage + "]: ";
  try {
    return fn();
  } catch (const NoiseBudgetError& e) {
    throw NoiseBudgetError(tag + e.what());
  } catch (const EncodingOverflowError& e) {
    throw EncodingOverflowError(tag + e.what());
  } catch (const ParameterMismatchError& e) {
    throw ParameterMismatchError(tag + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(tag + e.what());
  }
}

}  // namespace detail

// Applies a broadcast aggregate to the client's copy of the global model.
inline void client_receive(ClientState& c, const aggregate::GlobalModelRef& g) {
  const auto delta = detail::staged(c.client_id, "decrypt-aggregate", [&] { return aggregate::materialize(g, c.keys->sk); });
  if (delta.size() != c.model.size()) throw std::invalid_argument("broadcast dimension mismatch");
  for (std::size_t j = 0; j < delta.size(); ++j) c.model[j] += delta[j];
}

// Quantized sensitivity vector, encrypted for mask aggregation.
inline he::EncryptedVector client_sensitivity(ClientState& c, sensitivity::Mode mode, double step, Prng& rng) {
  return detail::staged(c.client_id, "sensitivity", [&] {
    sensitivity::SensitivityMap map;
    if (mode == sensitivity::Mode::kAbsWeight) {
      map = sensitivity::abs_weight_scores(c.model);
    } else {
      map = sensitivity::compute_sensitivity(c.gradient_history, mode);
      c.gradient_history.clear();
    }
    return he::encrypt_packed_integers(c.keys->pk, sensitivity::quantize(map, step), rng);
  });
}

// Decrypts the broadcast mask sum and thresholds it locally.
inline void client_adopt_mask(ClientState& c, const he::EncryptedVector& sum, std::int64_t total_weight,
                              double step, double tau, std::uint64_t version) {
  detail::staged(c.client_id, "decrypt-mask", [&] {
    c.mask = sensitivity::filter_mask(
        sensitivity::decrypt_mask_sum(c.keys->sk, sum, c.model.size(), total_weight, step), tau);
    c.mask_version = version;
    return 0;
  });
}

struct ClientRoundOptions {
  std::size_t epochs = 1;
  double lr = 0.1;
  std::size_t batch_size = 32;
  bool dp = true;
  int scale_bits = 16;
  std::uint64_t round = 1;
  double tamper_scale = 1.0;
};

// local_train -> clip -> noise -> split by mask -> encrypt.
inline aggregate::HybridUpdate client_round(ClientState& c, const ClientRoundOptions& o) {
  Prng sgd_rng = c.rng.fork("sefl.sgd", o.round);
  Prng dp_rng = c.rng.fork("sefl.dp", o.round);
  Prng enc_rng = c.rng.fork("sefl.enc", o.round);
  auto delta = detail::staged(c.client_id, "train", [&] {
    return sgd(c.model, c.dataset, o.epochs, o.lr, o.batch_size, sgd_rng);
  });
  delta = privacy::clip_update(delta, c.dp.clip_norm);
  if (o.dp) {
    delta = detail::staged(c.client_id, "dp-noise", [&] {
      return privacy::add_dp_noise(delta, c.dp, c.mask, dp_rng);
    });
  }
  if (o.tamper_scale != 1.0) {
    for (auto& v : delta) v *= o.tamper_scale;
  }
  return detail::staged(c.client_id, "encrypt", [&] {
    return aggregate::make_update(delta, c.mask, c.keys->pk, o.scale_bits, enc_rng, c.client_id, c.weight(),
                                  c.mask_version);
  });
}

// Audit, aggregate, merge; advances the round counter and appends to the
// transcript. Throws if every update is rejected.
inline aggregate::AggregateResult server_round(ServerState& s, std::span<const aggregate::HybridUpdate> updates,
                                               const aggregate::AuditPolicy& policy, Prng& rng) {
  std::vector<aggregate::TranscriptRecord> records;
  aggregate::AggregateResult res = aggregate::aggregate_round(updates, s.pk, s.mask_version, policy, rng, &records);
  if (res.accepted.empty()) throw std::runtime_error("round " + std::to_string(s.round + 1) + ": every update was rejected");
  s.global = aggregate::merge_global(res.enc_agg, res.plain_agg, s.mask, res.total_weight);
  ++s.round;
  std::ostringstream out;
  aggregate::write_transcript(out, s.round, records);
  nlohmann::json summary = {{"round", s.round},
                            {"mask_version", s.mask_version},
                            {"encrypted", s.mask.encrypted_count()},
                            {"total_weight", res.total_weight},
                            {"accepted", res.accepted.size()},
                            {"rejected", res.rejected.size()}};
  out << summary.dump() << '\n';
  s.transcript += out.str();
  s.last_records = std::move(records);
  return res;
}

// ---- driver ----

struct RoundMetrics {
  std::size_t round = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double loss = 0.0;
  double eps_basic = 0.0;
  double eps_advanced = 0.0;
  std::size_t bytes_encrypted = 0;
  std::size_t bytes_plain = 0;
  double round_wall_ms = 0.0;
  std::size_t encrypted_params = 0;
  std::vector<std::string> rejected;
};

struct TrainingReport {
  std::vector<RoundMetrics> rounds;
  std::vector<std::vector<double>> models;  // global model after each row
  privacy::PrivacyLedger ledger;
  std::string transcript;
  int scale_bits = 0;
  bool early_stopped = false;

  std::string csv() const {
    std::string out = "round,train_acc,val_acc,loss,eps_basic,eps_advanced,bytes_encrypted,bytes_plain,round_wall_ms\n";
    for (const auto& r : rounds) {
      out += std::to_string(r.round) + "," + detail::fmt(r.train_acc) + "," + detail::fmt(r.val_acc) + "," +
             detail::fmt(r.loss) + "," + detail::fmt(r.eps_basic) + "," + detail::fmt(r.eps_advanced) + "," +
             std::to_string(r.bytes_encrypted) + "," + std::to_string(r.bytes_plain) + "," +
             detail::fmt(r.round_wall_ms) + "\n";
    }
    return out;
  }
};

inline TrainingReport run_training(const FLConfig& cfg) {
  cfg.validate();
  const RingContextPtr ctx = make_context(cfg.profile);
  const Prng root(cfg.seed);

  Prng data_rng = Prng(cfg.effective_data_seed()).fork("sefl.data");
  Dataset all = generate_blobs(cfg.samples + cfg.val_samples, cfg.dim, cfg.separation, data_rng);
  Dataset val(all.begin() + static_cast<std::ptrdiff_t>(cfg.samples), all.end());
  all.resize(cfg.samples);
  const auto shards = partition_data(
      all, PartitionSpec{cfg.clients, cfg.partition, cfg.skew_alpha, cfg.effective_data_seed()});

  // Trusted setup: every client gets (pk, sk), the server pk only.
  Prng key_rng = root.fork("sefl.keygen");
  auto keys = std::make_shared<const he::KeyPair>(he::keygen(ctx, key_rng));

  std::vector<ClientState> clients(cfg.clients);
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    ClientState& c = clients[i];
    char id[16];
    std::snprintf(id, sizeof id, "client%03zu", i);
    c.client_id = id;
    c.dataset = shards[i];
    c.model.assign(cfg.dim, 0.0);
    c.keys = keys;
    c.dp = cfg.dp_params;
    c.rng = root.fork("sefl.client", i);
    c.mask = sensitivity::Mask::uniform(
        cfg.dim, cfg.encrypt == EncryptMode::kOff ? sensitivity::Level::kPlain : sensitivity::Level::kEncrypt);
  }
  ServerState server;
  server.pk = keys->pk;
  server.mask = clients[0].mask;

  TrainingReport report{{}, {}, privacy::PrivacyLedger(cfg.delta_target), {}, 0, false};
  report.scale_bits = cfg.encrypt == EncryptMode::kOff ? 0 : cfg.effective_scale_bits(ctx->t());
  const aggregate::AuditPolicy policy{cfg.audit, cfg.effective_beta(), cfg.audit_fraction};
  Prng audit_rng = root.fork("sefl.audit");

  auto record = [&](std::size_t round, RoundMetrics m) {
    const auto& w = clients[0].model;
    m.round = round;
    m.train_acc = accuracy(w, all);
    m.val_acc = accuracy(w, val);
    m.loss = local_objective(w, all);
    if (report.ledger.rounds_executed() > 0) {
      m.eps_basic = report.ledger.composed_basic().epsilon;
      m.eps_advanced = report.ledger.composed_advanced().epsilon;
    }
    m.encrypted_params = server.mask.encrypted_count();
    report.rounds.push_back(std::move(m));
    report.models.push_back(w);
  };
  record(0, {});

  std::size_t plateau = 0;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const auto started = std::chrono::steady_clock::now();
    RoundMetrics m;

    if (cfg.encrypt == EncryptMode::kSelective && cfg.sensitivity_mode == sensitivity::Mode::kGradMagnitude) {
      for (auto& c : clients) c.gradient_history.push_back(gradient(c.model, c.dataset));
    }
    // Mask refresh: encrypted weighted sum of sensitivity levels.
    if (cfg.encrypt == EncryptMode::kSelective && (r - 1) % cfg.mask_refresh_every == 0) {
      std::vector<he::EncryptedVector> vecs(clients.size());
      std::vector<std::int64_t> weights(clients.size());
      parallel_for(clients.size(), [&](std::size_t i) {
        Prng rng = clients[i].rng.fork("sefl.mask", r);
        vecs[i] = client_sensitivity(clients[i], cfg.sensitivity_mode, cfg.sens_step, rng);
        weights[i] = clients[i].weight();
      });
      const auto sum = sensitivity::aggregate_masks_encrypted(vecs, weights, server.pk);
      const std::int64_t total = std::accumulate(weights.begin(), weights.end(), std::int64_t{0});
      const std::uint64_t version = server.mask_version + 1;
      parallel_for(clients.size(), [&](std::size_t i) {
        client_adopt_mask(clients[i], sum, total, cfg.sens_step, cfg.tau, version);
      });
      for (const auto& c : clients) {
        if (!(c.mask == clients[0].mask)) throw std::runtime_error("clients derived different masks");
      }
      server.mask = clients[0].mask;
      server.mask_version = version;
    }

    std::vector<aggregate::HybridUpdate> updates(clients.size());
    parallel_for(clients.size(), [&](std::size_t i) {
      ClientRoundOptions o{cfg.epochs, cfg.lr, cfg.batch_size, cfg.dp, report.scale_bits, r,
                           static_cast<int>(i) == cfg.tamper_client ? cfg.tamper_scale : 1.0};
      updates[i] = client_round(clients[i], o);
    });
    for (const auto& u : updates) {
      m.bytes_encrypted += he::wire_bytes(u.enc_part);
      m.bytes_plain += 8 * u.plain_part.size();
    }

    aggregate::AggregateResult res = server_round(server, updates, policy, audit_rng);
    for (const auto& rej : res.rejected) m.rejected.push_back(rej.client_id);
    parallel_for(clients.size(), [&](std::size_t i) { client_receive(clients[i], *server.global); });
    if (cfg.dp) report.ledger.record(cfg.dp_params);

    if (cfg.report_timing) {
      m.round_wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    const double prev_val = report.rounds.back().val_acc;
    record(r, std::move(m));
    if (cfg.early_stop) {
      plateau = report.rounds.back().val_acc - prev_val < 0.001 ? plateau + 1 : 0;
      if (plateau >= 5) {
        report.early_stopped = true;
        break;
      }
    }
  }
  report.transcript = server.transcript;
  return report;
}

}  // namespace sefl::flsim
