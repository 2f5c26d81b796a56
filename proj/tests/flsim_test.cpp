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

#include "sefl/flsim.hpp"

#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <set>
#include <sstream>

namespace sefl::flsim {
namespace {

using sensitivity::Level;
using sensitivity::Mask;

Dataset Blobs(std::size_t n, std::size_t dim, std::uint64_t seed, double sep = 4.0) {
  Prng rng(seed);
  return generate_blobs(n, dim, sep, rng);
}

TEST(PartitionTest, SingleClientGetsEverything) {
  Dataset d = Blobs(37, 3, 1);
  auto parts = partition_data(d, {1, PartitionMode::kIid, 0.5, 9});
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0].size(), 37u);
}

TEST(PartitionTest, IidEqualSizesDisjointCover) {
  Dataset d = Blobs(100, 3, 2);
  for (std::size_t i = 0; i < d.size(); ++i) d[i].x[0] = static_cast<double>(i);  // tag
  auto parts = partition_data(d, {4, PartitionMode::kIid, 0.5, 3});
  std::multiset<double> seen;
  for (const auto& p : parts) {
    EXPECT_EQ(p.size(), 25u);
    for (const auto& s : p) seen.insert(s.x[0]);
  }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(std::set<double>(seen.begin(), seen.end()).size(), 100u);
  EXPECT_THROW(partition_data(Blobs(3, 3, 1), {4, PartitionMode::kIid, 0.5, 3}), std::invalid_argument);
}

TEST(PartitionTest, LabelSkewDivergesAndCovers) {
  int divergent = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Dataset d = Blobs(200, 3, 100 + seed);
    auto parts = partition_data(d, {2, PartitionMode::kLabelSkew, 0.1, seed});
    ASSERT_EQ(parts[0].size() + parts[1].size(), 200u);
    ASSERT_FALSE(parts[0].empty());
    ASSERT_FALSE(parts[1].empty());
    auto frac1 = [](const Dataset& p) {
      double ones = 0;
      for (const auto& s : p) ones += s.y;
      return ones / p.size();
    };
    // Total variation between two binary histograms.
    divergent += std::fabs(frac1(parts[0]) - frac1(parts[1])) > 0.5;
  }
  EXPECT_GE(divergent, 80);
}

TEST(ObjectiveTest, UniformPredictorAndSaturation) {
  Dataset d = Blobs(40, 5, 3);
  EXPECT_NEAR(local_objective(std::vector<double>(5, 0.0), d), std::log(2.0), 1e-15);
  Dataset one{{{1.0}, 1}};
  EXPECT_LT(local_objective(std::vector<double>{50.0}, one), 1e-20);
  EXPECT_THROW(local_objective(std::vector<double>{1.0}, Dataset{}), std::invalid_argument);
}

TEST(ObjectiveTest, MatchesHighPrecisionOracle) {
  using Big = boost::multiprecision::cpp_dec_float_50;
  Prng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d = Blobs(10, 4, 200 + trial);
    std::vector<double> w(4);
    for (auto& v : w) v = 3 * rng.gaussian();
    Big total = 0;
    for (const auto& s : d) {
      Big z = 0;
      for (std::size_t j = 0; j < w.size(); ++j) z += Big(w[j]) * Big(s.x[j]);
      total += boost::multiprecision::log(1 + boost::multiprecision::exp(z)) - s.y * z;
    }
    const double expect = static_cast<double>(total / 10);
    EXPECT_NEAR(local_objective(w, d), expect, 1e-10);
  }
}

TEST(TrainTest, ZeroLearningRateDoesNotMove) {
  Dataset d = Blobs(30, 3, 4);
  Prng rng(1);
  EXPECT_EQ(sgd(std::vector<double>{1, 2, 3}, d, 3, 0.0, 8, rng), (std::vector<double>{0, 0, 0}));
}

TEST(TrainTest, FullBatchStepMatchesFiniteDifferences) {
  Dataset d = Blobs(50, 4, 5);
  std::vector<double> w{0.3, -0.2, 0.1, 0.05};
  const double lr = 0.25;
  Prng rng(1);
  auto delta = sgd(w, d, 1, lr, 0, rng);
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double h = 1e-6;
    auto wp = w, wm = w;
    wp[j] += h;
    wm[j] -= h;
    const double fd = (local_objective(wp, d) - local_objective(wm, d)) / (2 * h);
    EXPECT_NEAR(delta[j], -lr * fd, 1e-5 * std::max(1.0, std::fabs(lr * fd)));
  }
}

TEST(TrainTest, LossNonIncreasingOnSeparableData) {
  Dataset d = Blobs(100, 3, 6, 8.0);
  std::vector<double> w(3, 0.0);
  double prev = local_objective(w, d);
  Prng rng(1);
  for (int e = 0; e < 30; ++e) {
    auto delta = sgd(w, d, 1, 0.05, 0, rng);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] += delta[j];
    const double loss = local_objective(w, d);
    EXPECT_LE(loss, prev + 1e-15);
    prev = loss;
  }
  EXPECT_GE(accuracy(w, d), 0.99);
}

TEST(ConfigTest, ParseOverridesAndRejects) {
  std::istringstream in("# demo\nclients = 3\nencrypt=full  # trailing\ntau=0.5\nepsilon=inf\n\n");
  FLConfig c = parse_config(in);
  EXPECT_EQ(c.clients, 3u);
  EXPECT_EQ(c.encrypt, EncryptMode::kFull);
  EXPECT_EQ(c.tau, 0.5);
  EXPECT_TRUE(std::isinf(c.dp_params.epsilon));
  std::istringstream again(c.to_string());
  EXPECT_EQ(parse_config(again).to_string(), c.to_string());
  for (const char* bad : {"nonsense=1\n", "clients=x\n", "clients\n", "encrypt=maybe\n", "clients=-2\n"}) {
    std::istringstream b(bad);
    EXPECT_THROW(parse_config(b), ConfigError) << bad;
  }
}

TEST(ConfigTest, ValidationCatchesBadValuesAndHeadroom) {
  auto invalid = [](auto mutate) {
    FLConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  invalid([](FLConfig& c) { c.profile = "nope"; });
  invalid([](FLConfig& c) { c.clients = 0; });
  invalid([](FLConfig& c) { c.samples = 2; });
  invalid([](FLConfig& c) { c.dp_params.clip_norm = 0; });
  invalid([](FLConfig& c) { c.dp_params.delta = 0; });
  invalid([](FLConfig& c) { c.tau = -1; });
  invalid([](FLConfig& c) {
    c.profile = "toy1024";  // t = 2^24
    c.samples = 1000000;
  });
  FLConfig ok;
  EXPECT_NO_THROW(ok.validate());
  const u64 t = ring_profile(ok.profile).params.t;
  const int s = ok.effective_scale_bits(t);
  EXPECT_LT(ok.samples * ok.coordinate_bound() * std::ldexp(1.0, s), t / 2.0);
}

class ClientRoundTest : public ::testing::Test {
 protected:
  RingContextPtr ctx_ = make_context("toy1024");
  ClientState c_;

  void SetUp() override {
    Prng rng(3);
    c_.client_id = "c0";
    c_.dataset = Blobs(40, 6, 8);
    c_.model.assign(6, 0.0);
    c_.keys = std::make_shared<const he::KeyPair>(he::keygen(ctx_, rng));
    c_.rng = Prng(4);
    c_.dp.clip_norm = 0.05;
  }
};

TEST_F(ClientRoundTest, PlainPassthroughEqualsClippedDelta) {
  c_.mask = Mask::uniform(6, Level::kPlain);
  ClientRoundOptions o;
  o.dp = false;
  o.lr = 1.0;
  aggregate::HybridUpdate u = client_round(c_, o);
  Prng sgd_rng = c_.rng.fork("sefl.sgd", o.round);
  auto expect = privacy::clip_update(sgd(c_.model, c_.dataset, o.epochs, o.lr, o.batch_size, sgd_rng), 0.05);
  EXPECT_TRUE(u.enc_part.empty());
  EXPECT_EQ(u.plain_part, expect);
  EXPECT_EQ(u.weight, 40);
}

TEST_F(ClientRoundTest, EncryptedSliceRoundTrips) {
  c_.mask = Mask::uniform(6, Level::kEncrypt);
  c_.mask.levels[2] = Level::kPlain;
  c_.dp.clip_norm = 10.0;
  ClientRoundOptions o;
  o.scale_bits = 12;
  aggregate::HybridUpdate u = client_round(c_, o);
  EXPECT_EQ(u.enc_slots, 5u);
  EXPECT_EQ(u.plain_part.size(), 1u);
  // Reference: same streams, no encryption.
  Prng sgd_rng = c_.rng.fork("sefl.sgd", o.round), dp_rng = c_.rng.fork("sefl.dp", o.round);
  auto ref = privacy::clip_update(sgd(c_.model, c_.dataset, o.epochs, o.lr, o.batch_size, sgd_rng), 10.0);
  ref = privacy::add_dp_noise(ref, c_.dp, c_.mask, dp_rng);
  auto dec = he::decrypt_packed(c_.keys->sk, u.enc_part, u.enc_slots);
  std::size_t k = 0;
  for (std::size_t j = 0; j < 6; ++j) {
    if (j == 2) continue;
    EXPECT_LE(std::fabs(dec[k++] - ref[j]), std::ldexp(1.0, -13));
  }
  EXPECT_EQ(u.plain_part[0], ref[2]);

  c_.mask = Mask::uniform(6, Level::kEncrypt);
  EXPECT_TRUE(client_round(c_, o).plain_part.empty());
}

TEST_F(ClientRoundTest, OverflowIsTaggedWithStage) {
  c_.mask = Mask::uniform(6, Level::kEncrypt);
  c_.dp.clip_norm = 10.0;
  ClientRoundOptions o;
  o.scale_bits = 30;
  o.lr = 50.0;
  try {
    client_round(c_, o);
    FAIL();
  } catch (const EncodingOverflowError& e) {
    EXPECT_NE(std::string(e.what()).find("c0 [encrypt]"), std::string::npos) << e.what();
  }
}

FLConfig SmallConfig() {
  FLConfig c;
  c.profile = "toy1024";
  c.samples = 400;
  c.val_samples = 100;
  c.dim = 20;
  c.rounds = 8;
  c.dp = false;
  return c;
}

TEST(ServerRoundTest, SingleClientMovesByItsUpdate) {
  FLConfig cfg = SmallConfig();
  auto ctx = make_context(cfg.profile);
  Prng rng(5);
  auto kp = std::make_shared<const he::KeyPair>(he::keygen(ctx, rng));
  ClientState c;
  c.client_id = "solo";
  c.dataset = Blobs(30, 4, 9);
  c.model = {0.1, 0.2, 0.3, 0.4};
  c.keys = kp;
  c.rng = Prng(6);
  c.mask = Mask::uniform(4, Level::kEncrypt);
  c.mask.levels[1] = Level::kPlain;
  ServerState s;
  s.pk = kp->pk;
  s.mask = c.mask;
  ClientRoundOptions o;
  o.dp = false;
  o.scale_bits = 16;
  auto u = client_round(c, o);
  std::vector<aggregate::HybridUpdate> ups{u};
  Prng audit(1);
  server_round(s, ups, aggregate::AuditPolicy{}, audit);
  EXPECT_EQ(s.round, 1u);
  auto before = c.model;
  client_receive(c, *s.global);
  auto enc = he::decrypt_packed(kp->sk, u.enc_part, u.enc_slots);
  const std::vector<double> decoded{enc[0], u.plain_part[0], enc[1], enc[2]};
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(c.model[j] - before[j], decoded[j]);
  EXPECT_NE(s.transcript.find("\"client_id\":\"solo\""), std::string::npos);

  u.mask_version = 9;
  std::vector<aggregate::HybridUpdate> stale{u};
  EXPECT_THROW(server_round(s, stale, aggregate::AuditPolicy{}, audit), std::runtime_error);
  EXPECT_EQ(s.round, 1u);
}

TEST(RunTrainingTest, ZeroRoundsReportsInitialModel) {
  FLConfig cfg = SmallConfig();
  cfg.rounds = 0;
  TrainingReport r = run_training(cfg);
  ASSERT_EQ(r.rounds.size(), 1u);
  EXPECT_EQ(r.rounds[0].round, 0u);
  EXPECT_NEAR(r.rounds[0].loss, std::log(2.0), 1e-12);
  EXPECT_EQ(r.csv().substr(0, r.csv().find('\n')),
            "round,train_acc,val_acc,loss,eps_basic,eps_advanced,bytes_encrypted,bytes_plain,round_wall_ms");
}

TEST(RunTrainingTest, EncryptedMatchesPlaintextFedAvg) {
  for (EncryptMode mode : {EncryptMode::kFull, EncryptMode::kSelective}) {
    FLConfig enc = SmallConfig();
    enc.encrypt = mode;
    FLConfig plain = enc;
    plain.encrypt = EncryptMode::kOff;
    TrainingReport a = run_training(enc), b = run_training(plain);
    const double tol = enc.dim * std::ldexp(1.0, -a.scale_bits);
    ASSERT_EQ(a.models.size(), b.models.size());
    for (std::size_t r = 0; r < a.models.size(); ++r) {
      for (std::size_t j = 0; j < enc.dim; ++j) EXPECT_LE(std::fabs(a.models[r][j] - b.models[r][j]), tol);
    }
    EXPECT_GT(a.rounds.back().bytes_encrypted, 0u);
    EXPECT_EQ(b.rounds.back().bytes_encrypted, 0u);
  }
}

TEST(RunTrainingTest, LedgerAndDeterminism) {
  FLConfig cfg = SmallConfig();
  cfg.dp = true;
  cfg.rounds = 10;
  TrainingReport a = run_training(cfg), b = run_training(cfg);
  EXPECT_EQ(a.csv(), b.csv());
  EXPECT_EQ(a.transcript, b.transcript);
  privacy::Budget basic = privacy::compose_basic(a.ledger);
  EXPECT_DOUBLE_EQ(basic.epsilon, 10.0);
  EXPECT_DOUBLE_EQ(basic.delta, 10 * 1e-5);
  EXPECT_DOUBLE_EQ(a.rounds.back().eps_basic, 10.0);
  cfg.seed = 2;
  EXPECT_NE(run_training(cfg).transcript, a.transcript);
}

TEST(RunTrainingTest, TamperedClientIsRejected) {
  FLConfig cfg = SmallConfig();
  cfg.dp = true;
  cfg.encrypt = EncryptMode::kOff;
  cfg.rounds = 3;
  cfg.tamper_client = 2;
  cfg.tamper_scale = 100;
  TrainingReport r = run_training(cfg);
  for (std::size_t i = 1; i < r.rounds.size(); ++i) {
    EXPECT_EQ(r.rounds[i].rejected, (std::vector<std::string>{"client002"}));
  }
}

TEST(RunTrainingTest, MaskRefreshKeepsCoverage) {
  FLConfig cfg = SmallConfig();
  cfg.rounds = 12;
  cfg.mask_refresh_every = 3;
  TrainingReport r = run_training(cfg);
  std::istringstream in(r.transcript);
  std::string line;
  std::uint64_t last_version = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    if (!j.contains("mask_version")) continue;
    const auto v = j["mask_version"].get<std::uint64_t>();
    EXPECT_GE(v, last_version);
    last_version = v;
    EXPECT_LE(j["encrypted"].get<std::size_t>(), cfg.dim);
  }
  EXPECT_EQ(last_version, 4u);
  for (const auto& m : r.models) EXPECT_EQ(m.size(), cfg.dim);
}

TEST(RunTrainingTest, EarlyStopOnPlateau) {
  FLConfig cfg = SmallConfig();
  cfg.rounds = 200;
  cfg.early_stop = true;
  cfg.encrypt = EncryptMode::kOff;
  TrainingReport r = run_training(cfg);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.rounds.size(), 201u);
}

}  // namespace
}  // namespace sefl::flsim
