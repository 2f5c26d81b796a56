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
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sefl/packing.hpp"
#include "sefl/sensitivity.hpp"

namespace sefl::aggregate {

// One client's contribution: the ENCRYPT coordinates packed into ciphertext
// blocks in mask order, the PLAIN coordinates in the clear.
struct HybridUpdate {
  std::string client_id;
  std::int64_t weight = 1;
  std::uint64_t mask_version = 0;
  he::EncryptedVector enc_part;
  std::size_t enc_slots = 0;
  std::vector<double> plain_part;

  std::size_t dimension() const { return enc_slots + plain_part.size(); }
};

struct Rejection {
  std::string client_id;
  std::string reason;
};

struct AggregateResult {
  he::EncryptedVector enc_agg;
  std::vector<double> plain_agg;
  std::int64_t total_weight = 0;
  std::vector<std::string> accepted;
  std::vector<Rejection> rejected;
};

// Client side: split values by mask and encrypt the sensitive slice.
inline HybridUpdate make_update(std::span<const double> values, const sensitivity::Mask& mask,
                                const he::PublicKey& pk, int scale_bits, Prng& rng,
                                std::string client_id, std::int64_t weight,
                                std::uint64_t mask_version) {
  if (values.size() != mask.size()) throw std::invalid_argument("update and mask lengths differ");
  HybridUpdate u;
  u.client_id = std::move(client_id);
  u.weight = weight;
  u.mask_version = mask_version;
  std::vector<double> enc;
  for (std::size_t j = 0; j < values.size(); ++j) {
    (mask.levels[j] == sensitivity::Level::kEncrypt ? enc : u.plain_part).push_back(values[j]);
  }
  u.enc_slots = enc.size();
  u.enc_part = he::encrypt_packed(pk, enc, scale_bits, rng);
  return u;
}

namespace detail {

inline std::vector<const HybridUpdate*> sorted_by_id(std::span<const HybridUpdate> updates) {
  std::vector<const HybridUpdate*> out;
  for (const auto& u : updates) out.push_back(&u);
  std::stable_sort(out.begin(), out.end(),
                   [](const HybridUpdate* a, const HybridUpdate* b) { return a->client_id < b->client_id; });
  return out;
}

inline void require_common_layout(std::span<const HybridUpdate* const> updates) {
  if (updates.empty()) throw std::invalid_argument("no updates to aggregate");
  const HybridUpdate& first = *updates.front();
  for (const HybridUpdate* u : updates) {
    if (u->weight < 1) throw std::invalid_argument("client " + u->client_id + " has weight < 1");
    if (u->mask_version != first.mask_version) {
      throw ParameterMismatchError("client " + u->client_id + " used mask version " +
                                   std::to_string(u->mask_version) + ", expected " +
                                   std::to_string(first.mask_version));
    }
    if (u->enc_slots != first.enc_slots || u->plain_part.size() != first.plain_part.size()) {
      throw std::invalid_argument("client " + u->client_id + " has a different slot layout");
    }
  }
}

// Both sums below expect updates already sorted by client_id.
inline he::EncryptedVector sum_encrypted(std::span<const HybridUpdate* const> sorted, const he::PublicKey& pk) {
  require_common_layout(sorted);
  std::vector<const he::EncryptedVector*> inputs;
  std::vector<std::int64_t> weights;
  for (const HybridUpdate* u : sorted) {
    if (u->enc_part.size() != he::blocks_for(u->enc_slots, *pk.context())) {
      throw std::invalid_argument("client " + u->client_id + " sent the wrong number of blocks");
    }
    for (const auto& ct : u->enc_part) {
      if (!ring::same_ring(ct.c0, pk.a)) {
        throw ParameterMismatchError("client " + u->client_id + " encrypted under a different ring");
      }
    }
    inputs.push_back(&u->enc_part);
    weights.push_back(u->weight);
  }
  if (sorted.front()->enc_slots == 0) return {};
  return he::weighted_sum(inputs, weights);
}

inline std::vector<double> sum_plain(std::span<const HybridUpdate* const> sorted) {
  require_common_layout(sorted);
  std::vector<double> out(sorted.front()->plain_part.size(), 0.0);
  for (const HybridUpdate* u : sorted) {
    const double w = static_cast<double>(u->weight);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * u->plain_part[j];
  }
  return out;
}

inline std::string hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : bytes) {
    s += kDigits[b >> 4];
    s += kDigits[b & 15];
  }
  return s;
}

}  // namespace detail

// Sum over updates of (enc_part (x) weight), folded in client_id order.
// Division by the total weight happens after decryption.
inline he::EncryptedVector aggregate_encrypted(std::span<const HybridUpdate> updates,
                                               const he::PublicKey& pk) {
  return detail::sum_encrypted(detail::sorted_by_id(updates), pk);
}

inline std::vector<double> aggregate_plain(std::span<const HybridUpdate> updates) {
  return detail::sum_plain(detail::sorted_by_id(updates));
}

// ---- sampling audit ----

struct AuditVerdict {
  bool accepted = true;
  std::string reason;

  static AuditVerdict accept() { return {}; }
  static AuditVerdict reject(std::string why) { return {false, std::move(why)}; }
};

// Inspects ceil(fraction * d) coordinates drawn without replacement.
inline AuditVerdict audit_update(std::span<const double> candidate, double beta,
                                 double sample_fraction, Prng& rng) {
  if (!(beta > 0.0)) return AuditVerdict::reject("invalid audit bound");
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) return AuditVerdict::reject("invalid sample fraction");
  const std::size_t d = candidate.size();
  if (d == 0) return AuditVerdict::accept();
  const std::size_t k = std::min<std::size_t>(
      d, static_cast<std::size_t>(std::ceil(sample_fraction * static_cast<double>(d))));
  std::vector<std::size_t> idx(d);
  for (std::size_t j = 0; j < d; ++j) idx[j] = j;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_below(d - i)]);
    const double x = candidate[idx[i]];
    if (!std::isfinite(x) || std::fabs(x) > beta) {
      return AuditVerdict::reject("coordinate " + std::to_string(idx[i]) + " exceeds bound");
    }
    sum_sq += x * x;
  }
  const double dd = static_cast<double>(d);
  if (std::sqrt(dd / static_cast<double>(k) * sum_sq) > beta * std::sqrt(dd)) {
    return AuditVerdict::reject("extrapolated norm exceeds bound");
  }
  return AuditVerdict::accept();
}

// ---- hash-weighted integrity mode ----

inline constexpr std::size_t kHashWeight = 32;

// Sparse ternary element of R_t with `weight` nonzero coefficients, seeded
// from the digest of the canonical ciphertext bytes.
inline he::Plaintext hash_to_plaintext(const he::Ciphertext& ct, std::size_t weight = kHashWeight) {
  const RingContextPtr& ctx = ct.context();
  const std::size_t n = ctx->n();
  if (weight == 0 || weight > n) throw std::invalid_argument("hash weight must be in [1, n]");
  Prng rng = Prng(digest(he::serialize(ct))).fork("sefl.hash");
  std::vector<u64> coeffs(n, 0);
  for (std::size_t placed = 0; placed < weight;) {
    const std::size_t pos = rng.uniform_below(n);
    if (coeffs[pos] != 0) continue;
    coeffs[pos] = (rng() & 1) ? 1 : ctx->t() - 1;
    ++placed;
  }
  return he::make_plaintext(ctx, std::move(coeffs));
}

struct HashWeightedAggregate {
  he::EncryptedVector agg;
  // hashes[i][b] is H(c) for block b of the i-th update in client_id order.
  std::vector<std::vector<he::Plaintext>> hashes;
  std::vector<std::string> client_ids;
};

inline HashWeightedAggregate aggregate_hash_weighted(std::span<const HybridUpdate> updates,
                                                     const he::PublicKey& pk) {
  const auto sorted = detail::sorted_by_id(updates);
  detail::require_common_layout(sorted);
  HashWeightedAggregate r;
  for (const HybridUpdate* u : sorted) {
    if (u->enc_part.size() != he::blocks_for(u->enc_slots, *pk.context())) {
      throw std::invalid_argument("client " + u->client_id + " sent the wrong number of blocks");
    }
    for (const auto& ct : u->enc_part) {
      if (!ring::same_ring(ct.c0, pk.a)) throw ParameterMismatchError("update encrypted under a different ring");
    }
    std::vector<he::Plaintext> hs;
    for (const auto& ct : u->enc_part) hs.push_back(hash_to_plaintext(ct));
    r.hashes.push_back(std::move(hs));
    r.client_ids.push_back(u->client_id);
  }
  const std::size_t blocks = sorted.front()->enc_part.size();
  r.agg.resize(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    he::Ciphertext acc = he::mul_plain(sorted[0]->enc_part[b], r.hashes[0][b]);
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      he::add_inplace(acc, he::mul_plain(sorted[i]->enc_part[b], r.hashes[i][b]));
    }
    r.agg[b] = std::move(acc);
  });
  for (std::size_t b = 0; b < blocks; ++b) {
    if (he::budget_exhausted(r.agg[b])) {
      throw NoiseBudgetError("hash-weighted aggregate exhausted the noise budget at block " + std::to_string(b));
    }
  }
  return r;
}

// Negacyclic product in R_t, exploiting the sparsity of b.
inline std::vector<u64> mul_in_rt(std::span<const u64> a, std::span<const u64> b, u64 t) {
  const std::size_t n = a.size();
  const Modulus tm(t);
  std::vector<u64> out(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (b[j] == 0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const u64 p = tm.mul(a[i], b[j]);
      const std::size_t k = i + j;
      if (k < n) {
        out[k] = tm.add(out[k], p);
      } else {
        out[k - n] = tm.sub(out[k - n], p);
      }
    }
  }
  return out;
}

// Key-holder check: recompute every H(c_i), decrypt the individual updates,
// and compare sum m_i * h_i against the decrypted aggregate.
inline bool verify_hash_weighted(const he::SecretKey& sk, std::span<const HybridUpdate> updates,
                                 const HashWeightedAggregate& result) {
  const auto sorted = detail::sorted_by_id(updates);
  if (sorted.size() != result.hashes.size()) return false;
  const u64 t = sk.s.context().t();
  for (std::size_t b = 0; b < result.agg.size(); ++b) {
    std::vector<u64> expect(sk.s.degree(), 0);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i]->client_id != result.client_ids[i] || sorted[i]->enc_part.size() != result.agg.size()) {
        return false;
      }
      const he::Ciphertext& ct = sorted[i]->enc_part[b];
      const he::Plaintext h = hash_to_plaintext(ct);
      if (h.coeffs != result.hashes[i][b].coeffs) return false;
      he::Plaintext m;
      try {
        m = he::decrypt(sk, ct);
      } catch (const NoiseBudgetError&) {
        return false;
      }
      const auto prod = mul_in_rt(m.coeffs, h.coeffs, t);
      for (std::size_t k = 0; k < prod.size(); ++k) expect[k] = (expect[k] + prod[k]) % t;
    }
    try {
      if (he::decrypt(sk, result.agg[b]).coeffs != expect) return false;
    } catch (const NoiseBudgetError&) {
      return false;
    }
  }
  return true;
}

// ---- global model ----

// Hybrid aggregate as broadcast by the server. Nothing here is decrypted.
struct GlobalModelRef {
  he::EncryptedVector enc_agg;
  std::vector<double> plain_agg;
  sensitivity::Mask mask;
  std::int64_t total_weight = 0;

  std::size_t dimension() const { return mask.size(); }
};

inline GlobalModelRef merge_global(he::EncryptedVector enc_agg, std::vector<double> plain_agg,
                                   const sensitivity::Mask& mask, std::int64_t total_weight) {
  if (total_weight < 1) throw std::invalid_argument("total weight must be >= 1");
  if (plain_agg.size() != mask.plain_count()) {
    throw std::invalid_argument("plain aggregate has " + std::to_string(plain_agg.size()) +
                                " entries, mask expects " + std::to_string(mask.plain_count()));
  }
  if (mask.encrypted_count() == 0 ? !enc_agg.empty()
                                  : enc_agg.empty() ||
                                        enc_agg.size() != he::blocks_for(mask.encrypted_count(),
                                                                         *enc_agg.front().context())) {
    throw std::invalid_argument("encrypted aggregate does not cover the mask's ENCRYPT slots");
  }
  return {std::move(enc_agg), std::move(plain_agg), mask, total_weight};
}

// Key-holder side: decrypt, scatter back into parameter order, and divide
// by the total weight.
inline std::vector<double> materialize(const GlobalModelRef& g, const he::SecretKey& sk) {
  const auto enc_idx = g.mask.encrypted_indices();
  const auto plain_idx = g.mask.plain_indices();
  const auto enc = he::decrypt_packed(sk, g.enc_agg, enc_idx.size());
  const double w = static_cast<double>(g.total_weight);
  std::vector<double> out(g.dimension());
  for (std::size_t k = 0; k < enc_idx.size(); ++k) out[enc_idx[k]] = enc[k] / w;
  for (std::size_t k = 0; k < plain_idx.size(); ++k) out[plain_idx[k]] = g.plain_agg[k] / w;
  return out;
}

// ---- full server round ----

struct AuditPolicy {
  bool enabled = true;
  double beta = 20.0;
  double sample_fraction = 0.1;
};

struct TranscriptRecord {
  std::string client_id;
  std::int64_t weight = 0;
  bool accepted = true;
  std::string reason;
  std::vector<std::string> enc_digests;
  std::string plain_checksum;
};

inline TranscriptRecord transcript_record(const HybridUpdate& u, const AuditVerdict& v) {
  TranscriptRecord r{u.client_id, u.weight, v.accepted, v.reason, {}, {}};
  for (const auto& ct : u.enc_part) r.enc_digests.push_back(detail::hex(digest(he::serialize(ct))));
  std::vector<std::uint8_t> buf;
  for (double x : u.plain_part) bytes::put_f64(buf, x);
  r.plain_checksum = detail::hex(digest(buf));
  return r;
}

// One JSON object per record, in client_id order.
inline void write_transcript(std::ostream& out, std::uint64_t round, std::span<const TranscriptRecord> records) {
  for (const auto& r : records) {
    nlohmann::json j = {{"round", round},         {"client_id", r.client_id},
                        {"weight", r.weight},     {"verdict", r.accepted ? "ACCEPT" : "REJECT"},
                        {"reason", r.reason},     {"enc_digests", r.enc_digests},
                        {"plain_checksum", r.plain_checksum}};
    out << j.dump() << '\n';
  }
}

// Filters updates by mask version and plaintext audit, then aggregates the
// accepted ones. Audits draw from rng in client_id order.
inline AggregateResult aggregate_round(std::span<const HybridUpdate> updates, const he::PublicKey& pk,
                                       std::uint64_t mask_version, const AuditPolicy& policy, Prng& rng,
                                       std::vector<TranscriptRecord>* transcript = nullptr) {
  AggregateResult result;
  std::vector<const HybridUpdate*> accepted;
  for (const HybridUpdate* u : detail::sorted_by_id(updates)) {
    AuditVerdict v;
    if (u->mask_version != mask_version) {
      v = AuditVerdict::reject("mask version " + std::to_string(u->mask_version) + " != " +
                               std::to_string(mask_version));
    } else if (policy.enabled) {
      v = audit_update(u->plain_part, policy.beta, policy.sample_fraction, rng);
    }
    if (transcript != nullptr) transcript->push_back(transcript_record(*u, v));
    if (v.accepted) {
      accepted.push_back(u);
      result.accepted.push_back(u->client_id);
      result.total_weight += u->weight;
    } else {
      result.rejected.push_back({u->client_id, v.reason});
    }
  }
  if (accepted.empty()) return result;
  result.enc_agg = detail::sum_encrypted(accepted, pk);
  result.plain_agg = detail::sum_plain(accepted);
  return result;
}

}  // namespace sefl::aggregate
