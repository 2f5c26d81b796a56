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
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sefl/aggregate.hpp"
#include "sefl/profiles.hpp"

namespace sefl::bench {

// Per-parameter communication cost of a selective upload.
struct CostModel {
  double c_enc = 0.0;
  double c_plain = 0.0;
  std::size_t d = 0;
  std::size_t n_enc = 0;
  std::size_t n_plain = 0;
  std::string unit = "bytes";

  void validate() const {
    if (n_enc + n_plain != d) throw std::invalid_argument("n_enc + n_plain must equal d");
    if (!(c_plain >= 0.0) || !(c_enc >= c_plain)) throw std::invalid_argument("need 0 <= c_plain <= c_enc");
  }
};

struct CostEstimate {
  double total = 0.0;
  double full = 0.0;   // d * c_enc
  double ratio = 0.0;  // total / full
};

inline CostEstimate estimate_cost(const CostModel& m) {
  m.validate();
  CostEstimate e;
  e.total = static_cast<double>(m.n_enc) * m.c_enc + static_cast<double>(m.n_plain) * m.c_plain;
  e.full = static_cast<double>(m.d) * m.c_enc;
  e.ratio = e.full > 0.0 ? e.total / e.full : 0.0;
  return e;
}

enum class Mode { kFull, kSelective, kPlaintext };

struct ModeSpec {
  Mode mode = Mode::kFull;
  double fraction = 1.0;

  static ModeSpec full() { return {Mode::kFull, 1.0}; }
  static ModeSpec selective(double f) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("encryption fraction must lie in [0, 1]");
    return {Mode::kSelective, f};
  }
  static ModeSpec plaintext() { return {Mode::kPlaintext, 0.0}; }

  static ModeSpec parse(const std::string& name, double fraction) {
    if (name == "full") return full();
    if (name == "selective") return selective(fraction);
    if (name == "plaintext") return plaintext();
    throw ConfigError("mode must be full, selective or plaintext");
  }

  const char* name() const {
    return mode == Mode::kFull ? "full" : mode == Mode::kSelective ? "selective" : "plaintext";
  }
};

struct BenchConfig {
  std::vector<std::size_t> sizes{10000, 100000, 1000000};
  std::vector<ModeSpec> modes{ModeSpec::full(), ModeSpec::selective(0.1), ModeSpec::plaintext()};
  std::string profile = "desk4096";
  std::size_t clients = 10;
  std::size_t repeats = 3;
  std::uint64_t seed = 1;
  double mem_cap_mb = 1024.0;
  int scale_bits = 16;
};

struct BenchRow {
  std::size_t model_size = 0;
  std::string mode;
  double enc_fraction = 0.0;
  double agg_wall_ms = 0.0;
  double enc_wall_ms = 0.0;
  std::size_t total_ct_bytes = 0;
  std::size_t total_plain_bytes = 0;
  double speedup_vs_full = std::nan("");

  double wall_ms() const { return agg_wall_ms + enc_wall_ms; }
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;
};

inline std::size_t encrypted_count(std::size_t d, const ModeSpec& m) {
  switch (m.mode) {
    case Mode::kFull:
      return d;
    case Mode::kPlaintext:
      return 0;
    default:
      return static_cast<std::size_t>(std::llround(m.fraction * static_cast<double>(d)));
  }
}

// Resident bytes of one cell: every client's ciphertexts plus the plaintext
// slices, held at once during aggregation.
inline double estimate_footprint_bytes(std::size_t d, const ModeSpec& m, std::size_t clients, const RingContext& ctx) {
  const std::size_t n_enc = encrypted_count(d, m);
  const double ct = static_cast<double>(he::blocks_for(n_enc, ctx) * he::serialized_size(ctx));
  return static_cast<double>(clients) * (ct + 8.0 * static_cast<double>(d - n_enc)) + 8.0 * static_cast<double>(d);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Random mask with exactly n_enc ENCRYPT entries.
inline sensitivity::Mask random_mask(std::size_t d, std::size_t n_enc, Prng& rng) {
  sensitivity::Mask mask = sensitivity::Mask::uniform(d, sensitivity::Level::kPlain);
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n_enc; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_below(d - i)]);
    mask.levels[idx[i]] = sensitivity::Level::kEncrypt;
  }
  return mask;
}

inline BenchRow run_cell(std::size_t d, const ModeSpec& m, const BenchConfig& cfg, const he::KeyPair& kp, Prng& rng) {
  using clock = std::chrono::steady_clock;
  const std::size_t n_enc = encrypted_count(d, m);
  const sensitivity::Mask mask = random_mask(d, n_enc, rng);
  BenchRow row{d, m.name(), static_cast<double>(n_enc) / static_cast<double>(d), 0, 0, 0, 0, std::nan("")};
  std::vector<double> enc_ms, agg_ms;
  for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
    std::vector<aggregate::HybridUpdate> updates(cfg.clients);
    double enc_total = 0.0;
    std::vector<double> values(d);
    for (std::size_t i = 0; i < cfg.clients; ++i) {
      for (auto& v : values) v = rng.gaussian();
      const auto t0 = clock::now();
      updates[i] = aggregate::make_update(values, mask, kp.pk, cfg.scale_bits, rng, "c" + std::to_string(i),
                                          static_cast<std::int64_t>(1 + i), 0);
      enc_total += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    }
    const auto t0 = clock::now();
    auto enc = aggregate::aggregate_encrypted(updates, kp.pk);
    auto plain = aggregate::aggregate_plain(updates);
    agg_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    enc_ms.push_back(enc_total);
    if (rep == 0) {
      for (const auto& u : updates) {
        row.total_ct_bytes += he::wire_bytes(u.enc_part);
        row.total_plain_bytes += 8 * u.plain_part.size();
      }
    }
  }
  row.enc_wall_ms = median(enc_ms);
  row.agg_wall_ms = median(agg_ms);
  return row;
}

// Cells run sequentially. speedup_vs_full compares total (encrypt +
// aggregate) time against the FULL row of the same size.
inline BenchReport run_benchmark(const BenchConfig& cfg) {
  if (cfg.sizes.empty() || cfg.modes.empty()) throw ConfigError("benchmark needs sizes and modes");
  if (cfg.clients == 0 || cfg.repeats == 0) throw ConfigError("clients and repeats must be >= 1");
  const RingContextPtr ctx = make_context(cfg.profile);
  for (std::size_t d : cfg.sizes) {
    if (d == 0) throw ConfigError("model sizes must be >= 1");
    for (const auto& m : cfg.modes) {
      const double mb = estimate_footprint_bytes(d, m, cfg.clients, *ctx) / (1024.0 * 1024.0);
      if (mb > cfg.mem_cap_mb) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "size %zu mode %s needs ~%.0f MiB, cap is %.0f MiB", d, m.name(), mb,
                      cfg.mem_cap_mb);
        throw MemoryGuardError(buf);
      }
    }
  }
  Prng root(cfg.seed);
  Prng key_rng = root.fork("sefl.bench.keygen");
  const he::KeyPair kp = he::keygen(ctx, key_rng);
  BenchReport report;
  report.metadata = {{"profile", cfg.profile},
                     {"clients", std::to_string(cfg.clients)},
                     {"repeats", std::to_string(cfg.repeats)},
                     {"threads", std::to_string(std::max(1u, std::thread::hardware_concurrency()))},
                     {"seed", std::to_string(cfg.seed)}};
  for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
    const std::size_t first = report.rows.size();
    for (std::size_t mi = 0; mi < cfg.modes.size(); ++mi) {
      Prng rng = root.fork("sefl.bench.cell", si * cfg.modes.size() + mi);
      report.rows.push_back(run_cell(cfg.sizes[si], cfg.modes[mi], cfg, kp, rng));
    }
    const BenchRow* full = nullptr;
    for (std::size_t i = first; i < report.rows.size(); ++i) {
      if (report.rows[i].mode == "full") full = &report.rows[i];
    }
    if (full != nullptr) {
      const double base = full->wall_ms();
      for (std::size_t i = first; i < report.rows.size(); ++i) {
        report.rows[i].speedup_vs_full = base / report.rows[i].wall_ms();
      }
    }
  }
  return report;
}

// ---- report emission ----

enum class Format { kCsv, kJsonLines };

inline constexpr const char* kColumns[] = {"model_size",  "mode",           "enc_fraction",      "agg_wall_ms",
                                           "enc_wall_ms", "total_ct_bytes", "total_plain_bytes", "speedup_vs_full"};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string emit_report(const BenchReport& report, Format format) {
  if (report.rows.empty()) throw std::invalid_argument("empty report");
  std::string out;
  if (format == Format::kCsv) {
    for (std::size_t i = 0; i < std::size(kColumns); ++i) out += std::string(i ? "," : "") + kColumns[i];
    out += '\n';
    for (const auto& r : report.rows) {
      out += std::to_string(r.model_size) + "," + r.mode + "," + detail::fmt(r.enc_fraction) + "," +
             detail::fmt(r.agg_wall_ms) + "," + detail::fmt(r.enc_wall_ms) + "," + std::to_string(r.total_ct_bytes) +
             "," + std::to_string(r.total_plain_bytes) + "," + detail::fmt(r.speedup_vs_full) + "\n";
    }
    return out;
  }
  for (const auto& r : report.rows) {
    nlohmann::ordered_json j;
    j["model_size"] = r.model_size;
    j["mode"] = r.mode;
    j["enc_fraction"] = r.enc_fraction;
    j["agg_wall_ms"] = r.agg_wall_ms;
    j["enc_wall_ms"] = r.enc_wall_ms;
    j["total_ct_bytes"] = r.total_ct_bytes;
    j["total_plain_bytes"] = r.total_plain_bytes;
    if (std::isnan(r.speedup_vs_full)) {
      j["speedup_vs_full"] = nullptr;
    } else {
      j["speedup_vs_full"] = r.speedup_vs_full;
    }
    out += j.dump() + '\n';
  }
  return out;
}

inline BenchReport parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV");
  std::string header;
  for (std::size_t i = 0; i < std::size(kColumns); ++i) header += std::string(i ? "," : "") + kColumns[i];
  if (line != header) throw FormatError("unexpected CSV header");
  BenchReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != std::size(kColumns)) throw FormatError("CSV row has " + std::to_string(f.size()) + " fields");
    auto num = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0') throw FormatError("bad number '" + s + "'");
      return v;
    };
    auto count = [&](const std::string& s) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
      if (end == s.c_str() || *end != '\0') throw FormatError("bad count '" + s + "'");
      return static_cast<std::size_t>(v);
    };
    report.rows.push_back({count(f[0]), f[1], num(f[2]), num(f[3]), num(f[4]), count(f[5]), count(f[6]), num(f[7])});
  }
  return report;
}

}  // namespace sefl::bench
