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

#include "sefl/privacy.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace sefl::privacy {
namespace {

using sensitivity::Level;
using sensitivity::Mask;

double Std(const std::vector<double>& v) {
  double m = 0, s = 0;
  for (double x : v) m += x;
  m /= v.size();
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

TEST(DpParamsTest, Validation) {
  DpParams ok;
  EXPECT_NO_THROW(ok.validate());
  EXPECT_DOUBLE_EQ(ok.noise_scale(), 1.0);
  auto bad = [](auto mutate) {
    DpParams p;
    mutate(p);
    return p;
  };
  EXPECT_THROW(bad([](DpParams& p) { p.epsilon = 0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](DpParams& p) { p.clip_norm = -1; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](DpParams& p) { p.delta = 1.0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](DpParams& p) { p.delta = 0.0; }).validate(), std::invalid_argument);
  EXPECT_NO_THROW(bad([](DpParams& p) {
                    p.delta = 0.0;
                    p.mechanism = Mechanism::kLaplace;
                  }).validate());
}

TEST(ClipTest, Examples) {
  EXPECT_EQ(clip_update(std::vector<double>{3, 4}, 10.0), (std::vector<double>{3, 4}));
  auto c = clip_update(std::vector<double>{30, 40}, 10.0);
  EXPECT_NEAR(c[0], 6.0, 1e-12);
  EXPECT_NEAR(c[1], 8.0, 1e-12);
  EXPECT_EQ(clip_update(std::vector<double>{0, 0, 0}, 1.0), (std::vector<double>{0, 0, 0}));
}

TEST(ClipTest, NormBoundAndIdempotence) {
  Prng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(1 + rng.uniform_below(200));
    const double scale = std::ldexp(1.0, static_cast<int>(rng.uniform_below(40)) - 20);
    for (auto& x : v) x = rng.gaussian() * scale;
    const double c = 0.01 + 20 * rng.uniform01();
    auto once = clip_update(v, c);
    EXPECT_LE(l2_norm(once), c * (1 + 1e-9));
    EXPECT_EQ(clip_update(once, c), once);
  }
}

TEST(NoiseTest, GaussianStdWithinTwoPercent) {
  const std::size_t n = 100000;
  DpParams dp;
  dp.epsilon = 0.5;  // sigma = 2
  Prng rng(123);
  auto out = add_dp_noise(std::vector<double>(n, 0.0), dp, Mask::uniform(n, Level::kEncrypt), rng);
  EXPECT_NEAR(Std(out), 2.0, 0.02 * 2.0);
  double mean = 0;
  for (double x : out) mean += x;
  mean /= n;
  EXPECT_LE(std::fabs(mean), 4 * 2.0 / std::sqrt(double(n)));
}

TEST(NoiseTest, LaplaceStdWithinTwoPercent) {
  const std::size_t n = 100000;
  DpParams dp;
  dp.mechanism = Mechanism::kLaplace;
  Prng rng(321);
  auto out = add_dp_noise(std::vector<double>(n, 0.0), dp, Mask::uniform(n, Level::kPlain), rng);
  // Laplace(b) has standard deviation b*sqrt(2).
  EXPECT_NEAR(Std(out), std::sqrt(2.0), 0.02 * std::sqrt(2.0));
}

TEST(NoiseTest, InfiniteEpsilonIsIdentity) {
  DpParams dp;
  dp.epsilon = std::numeric_limits<double>::infinity();
  Prng rng(1);
  std::vector<double> v{1.5, -2, 0};
  EXPECT_EQ(add_dp_noise(v, dp, Mask::uniform(3, Level::kEncrypt), rng), v);
}

TEST(NoiseTest, PlainRatioAndSensitivityScaling) {
  const std::size_t n = 40000;
  Mask mask = Mask::uniform(2 * n, Level::kEncrypt);
  for (std::size_t j = n; j < 2 * n; ++j) mask.levels[j] = Level::kPlain;
  DpParams dp;
  dp.plain_noise_ratio = 0.25;
  Prng rng(77);
  auto out = add_dp_noise(std::vector<double>(2 * n, 0.0), dp, mask, rng);
  std::vector<double> enc(out.begin(), out.begin() + n), plain(out.begin() + n, out.end());
  EXPECT_NEAR(Std(enc), 1.0, 0.03);
  EXPECT_NEAR(Std(plain), 0.25, 0.03 * 0.25);

  dp.plain_noise_ratio = 1.0;
  dp.scale_by_sensitivity = true;
  sensitivity::SensitivityMap scores;
  scores.scores.assign(n, 3.0);
  scores.scores.resize(2 * n, 1.0);  // mean 2: multipliers 1.5 and 0.5
  out = add_dp_noise(std::vector<double>(2 * n, 0.0), dp, mask, rng, &scores);
  enc.assign(out.begin(), out.begin() + n);
  plain.assign(out.begin() + n, out.end());
  EXPECT_NEAR(Std(enc), 1.5, 0.03 * 1.5);
  EXPECT_NEAR(Std(plain), 0.5, 0.03 * 0.5);
  EXPECT_THROW(add_dp_noise(std::vector<double>(2 * n, 0.0), dp, mask, rng), std::invalid_argument);
}

TEST(NoiseTest, SeededDeterminism) {
  DpParams dp;
  Prng a(5), b(5);
  std::vector<double> v(50, 1.0);
  Mask m = Mask::uniform(50, Level::kEncrypt);
  EXPECT_EQ(add_dp_noise(v, dp, m, a), add_dp_noise(v, dp, m, b));
}

TEST(ComposeBasicTest, Examples) {
  PrivacyLedger ledger;
  EXPECT_THROW(compose_basic(ledger), std::invalid_argument);
  ledger.record(1.0, 1e-5);
  Budget one = compose_basic(ledger);
  EXPECT_EQ(one.epsilon, 1.0);
  EXPECT_EQ(one.delta, 1e-5);
  ledger.record(1.0, 1e-5);
  ledger.record(1.0, 1e-5);
  Budget b = compose_basic(ledger);
  EXPECT_DOUBLE_EQ(b.epsilon, 3.0);
  EXPECT_DOUBLE_EQ(b.delta, 3e-5);
  EXPECT_EQ(ledger.rounds_executed(), ledger.per_round().size());
}

TEST(ComposeBasicTest, RandomLedgersMatchHandSum) {
  Prng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    PrivacyLedger ledger;
    double e = 0, d = 0;
    const int k = 1 + static_cast<int>(rng.uniform_below(30));
    for (int i = 0; i < k; ++i) {
      const double ei = 0.01 + rng.uniform01(), di = 1e-6 * rng.uniform01();
      ledger.record(ei, di);
      e += ei;
      d += di;
    }
    EXPECT_EQ(compose_basic(ledger).epsilon, e);
    EXPECT_EQ(compose_basic(ledger).delta, d);
  }
}

TEST(ComposeAdvancedTest, OracleValues) {
  EXPECT_NEAR(compose_advanced(1.0, std::exp(-1.0), 1), 3.1324953908321403, 1e-12);
  EXPECT_NEAR(compose_advanced(0.5, 1e-5, 10), 10.830742000426372, 1e-11);
  EXPECT_NEAR(compose_advanced(1.0, 1e-5, 50), 119.84479354502782, 1e-10);
  EXPECT_LT(compose_advanced(1e-12, 1e-5, 10), 1e-10);
}

TEST(ComposeAdvancedTest, DominatesFirstTermAndRejectsDomain) {
  Prng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const double eps = 1e-3 + 5 * rng.uniform01();
    const double delta = std::max(1e-300, rng.uniform01());
    const std::uint64_t k = 1 + rng.uniform_below(1000);
    EXPECT_GE(compose_advanced(eps, delta, k), std::sqrt(2.0 * k * std::log(1 / delta)) * eps);
  }
  EXPECT_THROW(compose_advanced(0, 0.5, 1), std::domain_error);
  EXPECT_THROW(compose_advanced(1, 0, 1), std::domain_error);
  EXPECT_THROW(compose_advanced(1, 1, 1), std::domain_error);
  EXPECT_THROW(compose_advanced(1, 0.5, 0), std::domain_error);
}

TEST(LedgerTest, AdvancedTotalsAndExport) {
  PrivacyLedger ledger(1e-5);
  ledger.record(0.5, 1e-6);
  ledger.record(0.5, 1e-6);
  Budget adv = ledger.composed_advanced();
  EXPECT_DOUBLE_EQ(adv.epsilon, compose_advanced(0.5, 1e-5, 2));
  EXPECT_DOUBLE_EQ(adv.delta, 2e-6 + 1e-5);
  std::ostringstream out;
  ledger.export_jsonl(out);
  std::istringstream in(out.str());
  std::string line;
  int rounds = 0;
  while (std::getline(in, line)) {
    auto rec = nlohmann::json::parse(line);
    ++rounds;
    EXPECT_EQ(rec["round"], rounds);
    EXPECT_EQ(rec["epsilon"], 0.5);
    EXPECT_DOUBLE_EQ(rec["basic_total"]["epsilon"].get<double>(), 0.5 * rounds);
    EXPECT_DOUBLE_EQ(rec["advanced_total"]["epsilon"].get<double>(), compose_advanced(0.5, 1e-5, rounds));
  }
  EXPECT_EQ(rounds, 2);
}

}  // namespace
}  // namespace sefl::privacy
