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
#include <span>
#include <string>
#include <vector>

#include "sefl/he.hpp"
#include "sefl/parallel.hpp"

// Packing of long vectors into runs of ciphertexts, and the weighted
// ciphertext sum that both mask and model aggregation reduce to.
namespace sefl::he {

using EncryptedVector = std::vector<Ciphertext>;

inline std::size_t blocks_for(std::size_t count, const RingContext& ctx) {
  return (count + ctx.n() - 1) / ctx.n();
}

// Slot j of the vector lands in block j / n, slot j % n.
inline EncryptedVector encrypt_packed(const PublicKey& pk, std::span<const double> values,
                                      int scale_bits, Prng& rng) {
  const RingContextPtr& ctx = pk.context();
  EncryptedVector out;
  out.reserve(blocks_for(values.size(), *ctx));
  for (std::size_t begin = 0; begin < values.size(); begin += ctx->n()) {
    const std::size_t len = std::min(ctx->n(), values.size() - begin);
    out.push_back(encrypt(pk, encode(values.subspan(begin, len), scale_bits, ctx), rng));
  }
  return out;
}

inline EncryptedVector encrypt_packed_integers(const PublicKey& pk,
                                               std::span<const std::int64_t> values, Prng& rng) {
  const RingContextPtr& ctx = pk.context();
  EncryptedVector out;
  out.reserve(blocks_for(values.size(), *ctx));
  for (std::size_t begin = 0; begin < values.size(); begin += ctx->n()) {
    const std::size_t len = std::min(ctx->n(), values.size() - begin);
    out.push_back(encrypt(pk, encode_integers(values.subspan(begin, len), ctx), rng));
  }
  return out;
}

inline std::vector<std::int64_t> decrypt_packed_integers(const SecretKey& sk,
                                                         const EncryptedVector& cts,
                                                         std::size_t count) {
  if (cts.empty() && count == 0) return {};
  const std::size_t n = sk.s.degree();
  if (cts.size() != (count + n - 1) / n) {
    throw std::invalid_argument("block count does not cover " + std::to_string(count) + " slots");
  }
  std::vector<std::int64_t> out;
  out.reserve(count);
  for (std::size_t b = 0; b < cts.size(); ++b) {
    Plaintext pt = decrypt(sk, cts[b]);
    pt.slot_count = std::min(n, count - b * n);
    auto ints = decode_integers(pt);
    out.insert(out.end(), ints.begin(), ints.end());
  }
  return out;
}

inline std::vector<double> decrypt_packed(const SecretKey& sk, const EncryptedVector& cts,
                                          std::size_t count) {
  auto ints = decrypt_packed_integers(sk, cts, count);
  const int scale_bits = cts.empty() ? 0 : cts.front().scale_bits;
  std::vector<double> out(ints.size());
  for (std::size_t j = 0; j < ints.size(); ++j) {
    out[j] = std::ldexp(static_cast<double>(ints[j]), -scale_bits);
  }
  return out;
}

inline std::size_t wire_bytes(const EncryptedVector& cts) {
  return cts.empty() ? 0 : cts.size() * serialized_size(*cts.front().context());
}

// Block-wise sum over inputs of (input[i] (x) weights[i]), folded left in
// input order. Blocks are reduced independently in parallel.
inline EncryptedVector weighted_sum(std::span<const EncryptedVector* const> inputs,
                                    std::span<const std::int64_t> weights) {
  if (inputs.empty()) throw std::invalid_argument("nothing to aggregate");
  if (inputs.size() != weights.size()) throw std::invalid_argument("one weight per input required");
  const std::size_t blocks = inputs.front()->size();
  for (const EncryptedVector* v : inputs) {
    if (v->size() != blocks) throw ParameterMismatchError("inputs have different block counts");
  }
  EncryptedVector out(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    auto term = [&](std::size_t i) {
      const Ciphertext& ct = (*inputs[i])[b];
      return weights[i] == 1 ? ct : mul_scalar(ct, weights[i]);
    };
    Ciphertext acc = term(0);
    for (std::size_t i = 1; i < inputs.size(); ++i) add_inplace(acc, term(i));
    out[b] = std::move(acc);
  });
  std::string report;
  for (std::size_t b = 0; b < blocks; ++b) {
    if (budget_exhausted(out[b])) {
      report += " block " + std::to_string(b) + ": budget 0 (bound 2^" +
                std::to_string(std::log2(out[b].noise_bound)) + ")";
    }
  }
  if (!report.empty()) throw NoiseBudgetError("aggregate exceeds noise budget:" + report);
  return out;
}

}  // namespace sefl::he
