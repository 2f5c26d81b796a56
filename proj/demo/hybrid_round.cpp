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

// One aggregation round by hand: three clients split their updates with a
// shared sensitivity mask, encrypt the sensitive slice, and the server sums
// both halves without decrypting anything. A key holder then recovers the
// weighted mean.

#include <cstdio>
#include <vector>

#include "sefl.hpp"

int main() {
  using namespace sefl;

  const RingContextPtr ctx = make_context("desk4096");
  Prng root(42);
  Prng key_rng = root.fork("demo.keygen");
  const he::KeyPair keys = he::keygen(ctx, key_rng);

  constexpr std::size_t kDim = 12;
  constexpr int kScaleBits = 16;

  // Mask from |w| of a reference model: large weights are encrypted.
  std::vector<double> reference(kDim);
  for (std::size_t j = 0; j < kDim; ++j) reference[j] = (j % 3 == 0) ? 1.5 : 0.1;
  const sensitivity::Mask mask = sensitivity::partition(sensitivity::abs_weight_scores(reference), 0.5);
  std::printf("encrypting %zu of %zu coordinates\n", mask.encrypted_count(), kDim);

  std::vector<aggregate::HybridUpdate> updates;
  std::vector<double> expected(kDim, 0.0);
  std::int64_t total_weight = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    Prng rng = root.fork("demo.client", i);
    std::vector<double> delta(kDim);
    for (auto& v : delta) v = 0.1 * rng.gaussian();
    const auto weight = static_cast<std::int64_t>(100 * (i + 1));
    for (std::size_t j = 0; j < kDim; ++j) expected[j] += weight * delta[j];
    total_weight += weight;
    updates.push_back(aggregate::make_update(delta, mask, keys.pk, kScaleBits, rng, "client" + std::to_string(i),
                                             weight, 0));
  }

  Prng audit_rng = root.fork("demo.audit");
  const aggregate::AggregateResult result =
      aggregate::aggregate_round(updates, keys.pk, 0, aggregate::AuditPolicy{}, audit_rng);
  std::printf("accepted %zu, rejected %zu, total weight %lld\n", result.accepted.size(), result.rejected.size(),
              static_cast<long long>(result.total_weight));

  const aggregate::GlobalModelRef global =
      aggregate::merge_global(result.enc_agg, result.plain_agg, mask, result.total_weight);
  const std::vector<double> mean = aggregate::materialize(global, keys.sk);

  std::printf("%4s %-8s %12s %12s\n", "j", "level", "decrypted", "expected");
  for (std::size_t j = 0; j < kDim; ++j) {
    std::printf("%4zu %-8s %12.6f %12.6f\n", j, sensitivity::to_string(mask.levels[j]), mean[j],
                expected[j] / static_cast<double>(total_weight));
  }
  return 0;
}
