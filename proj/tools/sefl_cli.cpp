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

// sefl: selective-encryption federated learning driver.
//
//   sefl train      [--config PATH] [--mode M] [--tau X] [--epsilon X] ...
//   sefl bench      [--sizes LIST] [--mode M] [--enc-fraction F] [--large] ...
//   sefl audit-demo [--seed N] ...
//   sefl keygen     --out PATH [--profile NAME] [--seed N]
//
// Exit codes: 0 ok, 2 configuration error, 3 memory guard, 4 audit demo
// mismatch, 1 anything else.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sefl.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMemory = 3;
constexpr int kExitAudit = 4;

struct CommonFlags {
  std::string config;
  std::string mode;
  double enc_fraction = 0.1;
  std::string sizes;
  std::optional<std::size_t> clients;
  std::optional<double> tau;
  std::optional<double> epsilon;
  std::optional<std::size_t> rounds;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  bool large = false;
  std::string profile;
};

void write_file(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw sefl::ConfigError("cannot write " + path);
  f << data;
}

void emit(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
  } else {
    write_file(path, data);
  }
}

std::vector<std::size_t> parse_sizes(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    // Accept 1e6 style shorthands.
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0' || !(v >= 1) || v != std::floor(v)) {
      throw sefl::ConfigError("bad size '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw sefl::ConfigError("--sizes is empty");
  return out;
}

int run_train(const CommonFlags& f) {
  sefl::flsim::FLConfig cfg;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw sefl::ConfigError("cannot read " + f.config);
    cfg = sefl::flsim::parse_config(in);
  }
  if (!f.mode.empty()) cfg.set("encrypt", f.mode);
  if (!f.profile.empty()) cfg.profile = f.profile;
  if (f.clients) cfg.clients = *f.clients;
  if (f.tau) cfg.tau = *f.tau;
  if (f.epsilon) cfg.dp_params.epsilon = *f.epsilon;
  if (f.rounds) cfg.rounds = *f.rounds;
  if (f.seed) cfg.seed = *f.seed;
  if (f.format != "csv" && f.format != "jsonl") throw sefl::ConfigError("--format must be csv or jsonl");

  const sefl::flsim::TrainingReport report = sefl::flsim::run_training(cfg);
  std::string body;
  if (f.format == "csv") {
    body = report.csv();
  } else {
    for (const auto& r : report.rounds) {
      nlohmann::ordered_json j = {{"round", r.round},
                                  {"train_acc", r.train_acc},
                                  {"val_acc", r.val_acc},
                                  {"loss", r.loss},
                                  {"eps_basic", r.eps_basic},
                                  {"eps_advanced", r.eps_advanced},
                                  {"bytes_encrypted", r.bytes_encrypted},
                                  {"bytes_plain", r.bytes_plain},
                                  {"round_wall_ms", r.round_wall_ms}};
      body += j.dump() + "\n";
    }
  }
  emit(f.out, body);
  if (!f.out.empty() && f.out != "-") {
    write_file(f.out + ".transcript.jsonl", report.transcript);
    std::ostringstream ledger;
    report.ledger.export_jsonl(ledger);
    write_file(f.out + ".ledger.jsonl", ledger.str());
  }
  const auto& last = report.rounds.back();
  std::cerr << "rounds=" << last.round << " train_acc=" << last.train_acc << " val_acc=" << last.val_acc
            << " eps_basic=" << last.eps_basic << " scale_bits=" << report.scale_bits << "\n";
  return 0;
}

int run_bench(const CommonFlags& f, std::size_t repeats, double mem_cap_mb) {
  sefl::bench::BenchConfig cfg;
  if (!f.profile.empty()) cfg.profile = f.profile;
  if (!f.sizes.empty()) cfg.sizes = parse_sizes(f.sizes);
  if (f.large) {
    for (std::size_t s : {std::size_t{10000000}, std::size_t{100000000}}) {
      if (std::find(cfg.sizes.begin(), cfg.sizes.end(), s) == cfg.sizes.end()) cfg.sizes.push_back(s);
    }
  } else {
    for (std::size_t s : cfg.sizes) {
      if (s > 1000000) throw sefl::ConfigError("sizes above 10^6 need --large");
    }
  }
  if (f.mode.empty()) {
    cfg.modes = {sefl::bench::ModeSpec::full(), sefl::bench::ModeSpec::selective(f.enc_fraction),
                 sefl::bench::ModeSpec::plaintext()};
  } else {
    cfg.modes = {sefl::bench::ModeSpec::full()};
    if (f.mode != "full") cfg.modes.push_back(sefl::bench::ModeSpec::parse(f.mode, f.enc_fraction));
  }
  if (f.clients) cfg.clients = *f.clients;
  if (f.seed) cfg.seed = *f.seed;
  cfg.repeats = repeats;
  cfg.mem_cap_mb = mem_cap_mb;
  sefl::bench::Format format;
  if (f.format == "csv") {
    format = sefl::bench::Format::kCsv;
  } else if (f.format == "jsonl") {
    format = sefl::bench::Format::kJsonLines;
  } else {
    throw sefl::ConfigError("--format must be csv or jsonl");
  }
  const sefl::bench::BenchReport report = sefl::bench::run_benchmark(cfg);
  emit(f.out, sefl::bench::emit_report(report, format));
  for (const auto& [k, v] : report.metadata) std::cerr << k << "=" << v << " ";
  std::cerr << "\n";
  return 0;
}

struct AuditDemoFlags {
  std::size_t dim = 1000;
  double alpha = 0.3;
  double sample_fraction = 0.1;
  std::size_t trials = 10000;
  double clip_norm = 10.0;
};

// Monte-Carlo check of the sampling audit: deviating updates must be caught
// at the predicted rate and honest clipped+noised updates must pass.
int run_audit_demo(const CommonFlags& f, const AuditDemoFlags& a) {
  if (!(a.alpha > 0 && a.alpha <= 1) || !(a.sample_fraction > 0 && a.sample_fraction <= 1) || a.dim == 0 ||
      a.trials == 0) {
    throw sefl::ConfigError("audit-demo parameters out of range");
  }
  sefl::Prng rng(f.seed.value_or(1));
  const double beta = 2.0 * a.clip_norm;
  sefl::privacy::DpParams dp;
  dp.clip_norm = a.clip_norm;
  if (f.epsilon) dp.epsilon = *f.epsilon;
  const auto mask = sefl::sensitivity::Mask::uniform(a.dim, sefl::sensitivity::Level::kPlain);

  std::size_t detected = 0, honest_rejected = 0;
  std::vector<double> v(a.dim);
  for (std::size_t t = 0; t < a.trials; ++t) {
    for (auto& x : v) x = rng.uniform01() < a.alpha ? 2.0 * beta : rng.gaussian();
    detected += !sefl::aggregate::audit_update(v, beta, a.sample_fraction, rng).accepted;

    for (auto& x : v) x = rng.gaussian() * 5.0;
    auto honest = sefl::privacy::add_dp_noise(sefl::privacy::clip_update(v, a.clip_norm), dp, mask, rng);
    honest_rejected += !sefl::aggregate::audit_update(honest, beta, a.sample_fraction, rng).accepted;
  }
  const double rate = static_cast<double>(detected) / static_cast<double>(a.trials);
  const double floor = 1.0 - std::pow(1.0 - a.alpha, a.sample_fraction * static_cast<double>(a.dim)) - 0.02;
  const double false_rate = static_cast<double>(honest_rejected) / static_cast<double>(a.trials);
  const bool ok = rate >= floor && false_rate < 0.001;
  std::ostringstream out;
  out << "detection_rate=" << rate << " required>=" << floor << "\nhonest_rejection_rate=" << false_rate
      << " required<0.001\nresult=" << (ok ? "PASS" : "MISMATCH") << "\n";
  emit(f.out, out.str());
  return ok ? 0 : kExitAudit;
}

int run_keygen(const CommonFlags& f) {
  if (f.out.empty() || f.out == "-") throw sefl::ConfigError("keygen needs --out PATH");
  const std::string profile = f.profile.empty() ? "desk4096" : f.profile;
  auto ctx = sefl::make_context(profile);
  sefl::Prng rng = f.seed ? sefl::Prng(*f.seed).fork("sefl.keygen") : sefl::Prng::from_os_entropy();
  const sefl::he::KeyPair kp = sefl::he::keygen(ctx, rng);
  auto put = [](const std::string& path, const std::vector<std::uint8_t>& bytes) {
    write_file(path, std::string(bytes.begin(), bytes.end()));
  };
  put(f.out, sefl::he::serialize_keys(kp, true));
  put(f.out + ".pub", sefl::he::serialize_keys(kp, false));
  std::cerr << "wrote " << f.out << " and " << f.out << ".pub (" << profile << ")\n";
  return 0;
}

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "key=value config file");
  app->add_option("--mode", f.mode, "full | selective | plaintext");
  app->add_option("--clients", f.clients, "number of clients");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--out", f.out, "output path (default stdout)");
  app->add_option("--format", f.format, "csv | jsonl");
  app->add_option("--profile", f.profile, "ring profile");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective-encryption federated learning: training, benchmarks, audits, keys."};
  app.require_subcommand(1);
  CommonFlags f;
  AuditDemoFlags audit;
  std::size_t repeats = 3;
  double mem_cap_mb = 1024.0;

  CLI::App* train = app.add_subcommand("train", "run the federated training simulation");
  add_common(train, f);
  train->add_option("--tau", f.tau, "sensitivity threshold");
  train->add_option("--epsilon", f.epsilon, "per-round epsilon");
  train->add_option("--rounds", f.rounds, "number of rounds");

  CLI::App* bench = app.add_subcommand("bench", "aggregation runtime and size sweep");
  add_common(bench, f);
  bench->add_option("--sizes", f.sizes, "comma-separated parameter counts");
  bench->add_option("--enc-fraction", f.enc_fraction, "selective encryption fraction");
  bench->add_flag("--large", f.large, "add the 10^7 and 10^8 sizes");
  bench->add_option("--repeats", repeats, "repeats per cell (median reported)");
  bench->add_option("--mem-cap-mb", mem_cap_mb, "memory guard in MiB");

  CLI::App* audit_demo = app.add_subcommand("audit-demo", "Monte-Carlo soundness audit");
  add_common(audit_demo, f);
  audit_demo->add_option("--epsilon", f.epsilon, "epsilon of the honest noise");
  audit_demo->add_option("--dim", audit.dim, "update dimension");
  audit_demo->add_option("--alpha", audit.alpha, "deviating fraction");
  audit_demo->add_option("--sample-fraction", audit.sample_fraction, "audited fraction");
  audit_demo->add_option("--trials", audit.trials, "Monte-Carlo trials");

  CLI::App* keygen = app.add_subcommand("keygen", "generate a key pair fixture");
  add_common(keygen, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return run_train(f);
    if (*bench) return run_bench(f, repeats, mem_cap_mb);
    if (*audit_demo) return run_audit_demo(f, audit);
    if (*keygen) return run_keygen(f);
  } catch (const sefl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sefl::MemoryGuardError& e) {
    std::cerr << "memory guard: " << e.what() << "\n";
    return kExitMemory;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
