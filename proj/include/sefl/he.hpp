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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sefl/bytes.hpp"
#include "sefl/errors.hpp"
#include "sefl/random.hpp"
#include "sefl/ring.hpp"

namespace sefl::he {

// How real values are laid out in a plaintext. Coefficient packing puts value
// j in coefficient j; batched packing puts it in CRT slot j (needs a prime
// t = 1 mod 2n) so plaintext products act slot-wise.
enum class Encoding : std::uint8_t { kCoefficient = 0, kBatched = 1 };

struct PublicKey {
  Polynomial a;
  Polynomial b;
  ring::NttPolynomial a_ntt;
  ring::NttPolynomial b_ntt;

  const RingContextPtr& context() const { return a.context_ptr(); }
};

struct SecretKey {
  Polynomial s;
  ring::NttPolynomial s_ntt;

  const RingContextPtr& context() const { return s.context_ptr(); }
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;

  const RingContextPtr& context() const { return pk.context(); }
  const RingParams& params() const { return pk.context()->params(); }
};

// Element of R_t with its fixed-point metadata.
struct Plaintext {
  RingContextPtr ctx;
  std::vector<u64> coeffs;
  std::size_t slot_count = 0;
  int scale_bits = 0;
  Encoding encoding = Encoding::kCoefficient;

  bool is_constant() const {
    return std::all_of(coeffs.begin() + 1, coeffs.end(), [](u64 c) { return c == 0; });
  }
};

// Two-component RLWE ciphertext. noise_bound is a worst-case bound on the
// infinity norm of c0 + s*c1 - round(q*m/t); it only ever grows.
struct Ciphertext {
  Polynomial c0;
  Polynomial c1;
  double noise_bound = 0.0;
  int ops_depth = 0;
  int scale_bits = 0;

  const RingContextPtr& context() const { return c0.context_ptr(); }

  friend bool operator==(const Ciphertext& x, const Ciphertext& y) {
    return x.c0 == y.c0 && x.c1 == y.c1 && x.noise_bound == y.noise_bound &&
           x.scale_bits == y.scale_bits;
  }
};

namespace detail {

// Round a bound estimate up past accumulated double rounding error.
inline double round_up(double x) { return x * (1.0 + 0x1p-40); }

// Per-operation slack from re-rounding q*m/t; at most 3/2 for additions.
inline constexpr double kRoundingDrift = 2.0;

inline const NttTables& batching_tables(const RingContext& ctx) {
  const NttTables* tables = ctx.plain_ntt();
  if (tables == nullptr) {
    throw std::invalid_argument("batched encoding needs a prime t = 1 mod 2n (t=" +
                                std::to_string(ctx.t()) + ")");
  }
  return *tables;
}

inline void lift_centered(const RingContext& ctx, std::span<const u64> coeffs_mod_t, Polynomial& out) {
  const u64 t = ctx.t();
  for (std::size_t l = 0; l < ctx.limbs(); ++l) {
    const Modulus& q = ctx.modulus(l);
    auto dst = out.limb(l);
    for (std::size_t i = 0; i < coeffs_mod_t.size(); ++i) {
      const u64 c = coeffs_mod_t[i];
      dst[i] = 2 * c > t ? q.neg(q.reduce(t - c)) : q.reduce(c);
    }
  }
}

// Adds (or subtracts) round(q*m/t) coefficient-wise; this equals
// floor(q/t)*m + round((q mod t)*m/t).
inline void add_scaled_message(const RingContext& ctx, std::span<const u64> m, Polynomial& out,
                               bool subtract) {
  const u64 t = ctx.t();
  const u128 r = ctx.q_mod_t();
  for (std::size_t l = 0; l < ctx.limbs(); ++l) {
    const Modulus& q = ctx.modulus(l);
    const ShoupConstant delta(ctx.delta_mod(l), q.value());
    auto dst = out.limb(l);
    for (std::size_t i = 0; i < ctx.n(); ++i) {
      if (m[i] == 0) continue;
      const u64 carry = static_cast<u64>((r * m[i] + t / 2) / t);
      const u64 v = q.add(delta.mul(q.reduce(m[i]), q.value()), q.reduce(carry));
      dst[i] = subtract ? q.sub(dst[i], v) : q.add(dst[i], v);
    }
  }
}

}  // namespace detail

// Threshold log2(q / (2t)) against which noise budgets are measured.
inline double log2_threshold(const RingContext& ctx) {
  return ctx.log2_q() - 1.0 - std::log2(static_cast<double>(ctx.t()));
}

// Bound on the noise of a fresh encryption: e1 - e*u + s*e2 with ternary u, s
// and error coefficients in [-k, k].
inline double fresh_noise_bound(const RingContext& ctx) {
  const double k = ctx.cbd_k();
  return detail::round_up(k * (2.0 * static_cast<double>(ctx.n()) + 1.0));
}

inline int noise_budget_bits(const Ciphertext& ct) {
  const double bits = log2_threshold(*ct.context()) -
                      std::log2(std::max(ct.noise_bound, 1.0));
  return std::max(0, static_cast<int>(std::floor(bits)));
}

// ---- keys ----

inline KeyPair keygen(const RingContextPtr& ctx, Prng& rng) {
  KeyPair kp;
  kp.sk.s = ring::sample_secret(ctx, rng);
  kp.pk.a = ring::sample_uniform(ctx, rng);
  const Polynomial e = ring::sample_error(ctx, rng);
  kp.pk.b = ring::sub(ring::negate(ring::mul(kp.pk.a, kp.sk.s)), e);
  if (ctx->has_ntt()) {
    kp.pk.a_ntt = ring::to_ntt(kp.pk.a);
    kp.pk.b_ntt = ring::to_ntt(kp.pk.b);
    kp.sk.s_ntt = ring::to_ntt(kp.sk.s);
  }
  return kp;
}

// Rebuilds cached transforms after keys are loaded from storage.
inline void refresh_caches(PublicKey& pk) {
  if (pk.a.context().has_ntt()) {
    pk.a_ntt = ring::to_ntt(pk.a);
    pk.b_ntt = ring::to_ntt(pk.b);
  }
}

inline void refresh_caches(SecretKey& sk) {
  if (sk.s.context().has_ntt()) sk.s_ntt = ring::to_ntt(sk.s);
}

// ---- encoding ----

inline Plaintext make_plaintext(const RingContextPtr& ctx, std::vector<u64> coeffs,
                                int scale_bits = 0) {
  if (coeffs.size() > ctx->n()) throw std::invalid_argument("plaintext longer than ring degree");
  for (u64 c : coeffs) {
    if (c >= ctx->t()) throw std::invalid_argument("plaintext coefficient not below t");
  }
  Plaintext pt;
  pt.ctx = ctx;
  pt.slot_count = coeffs.size();
  coeffs.resize(ctx->n(), 0);
  pt.coeffs = std::move(coeffs);
  pt.scale_bits = scale_bits;
  return pt;
}

// Constant polynomial w (reduced mod t).
inline Plaintext scalar_plaintext(const RingContextPtr& ctx, std::int64_t w) {
  const u64 t = ctx->t();
  const u64 r = Modulus(t).from_signed(w);
  return make_plaintext(ctx, {r});
}

inline Plaintext encode_integers(std::span<const std::int64_t> values, const RingContextPtr& ctx,
                                 Encoding encoding = Encoding::kCoefficient) {
  const std::size_t n = ctx->n();
  if (values.size() > n) throw std::invalid_argument("more values than slots");
  const u64 t = ctx->t();
  const Modulus tm(t);
  Plaintext pt;
  pt.ctx = ctx;
  pt.slot_count = values.size();
  pt.encoding = encoding;
  pt.coeffs.assign(n, 0);
  for (std::size_t j = 0; j < values.size(); ++j) {
    const double mag = std::fabs(static_cast<double>(values[j]));
    if (2.0 * mag >= static_cast<double>(t)) {
      throw EncodingOverflowError("value " + std::to_string(values[j]) +
                                  " does not fit in plaintext modulus " + std::to_string(t));
    }
    pt.coeffs[j] = tm.from_signed(values[j]);
  }
  if (encoding == Encoding::kBatched) detail::batching_tables(*ctx).inverse(pt.coeffs);
  return pt;
}

// Fixed-point encoding: v becomes round(v * 2^scale_bits) mod t.
inline Plaintext encode(std::span<const double> values, int scale_bits, const RingContextPtr& ctx,
                        Encoding encoding = Encoding::kCoefficient) {
  if (scale_bits < 0 || scale_bits > 60) throw std::invalid_argument("scale_bits out of range");
  const double scale = std::ldexp(1.0, scale_bits);
  const double half_t = static_cast<double>(ctx->t()) / 2.0;
  std::vector<std::int64_t> scaled(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) {
    const double s = values[j] * scale;
    if (!std::isfinite(s) || std::fabs(s) >= half_t) {
      throw EncodingOverflowError("scaled value " + std::to_string(s) + " at slot " +
                                  std::to_string(j) + " exceeds t/2; clip before encoding");
    }
    scaled[j] = std::llround(s);
  }
  Plaintext pt = encode_integers(scaled, ctx, encoding);
  pt.scale_bits = scale_bits;
  return pt;
}

// Centered slot residues as integers.
inline std::vector<std::int64_t> decode_integers(const Plaintext& pt) {
  std::vector<u64> slots = pt.coeffs;
  if (pt.encoding == Encoding::kBatched) detail::batching_tables(*pt.ctx).forward(slots);
  const u64 t = pt.ctx->t();
  const std::size_t count = pt.slot_count == 0 ? slots.size() : pt.slot_count;
  std::vector<std::int64_t> out(count);
  for (std::size_t j = 0; j < count; ++j) {
    const u64 r = slots[j];
    out[j] = 2 * r > t ? -static_cast<std::int64_t>(t - r) : static_cast<std::int64_t>(r);
  }
  return out;
}

inline std::vector<double> decode(const Plaintext& pt) {
  auto ints = decode_integers(pt);
  std::vector<double> out(ints.size());
  for (std::size_t j = 0; j < ints.size(); ++j) {
    out[j] = std::ldexp(static_cast<double>(ints[j]), -pt.scale_bits);
  }
  return out;
}

// ---- encryption ----

inline Ciphertext encrypt(const PublicKey& pk, const Plaintext& pt, Prng& rng) {
  const RingContextPtr& ctx = pk.context();
  if (pt.ctx == nullptr || pt.ctx->params() != ctx->params()) {
    throw ParameterMismatchError("plaintext and public key use different rings");
  }
  const Polynomial u = ring::sample_secret(ctx, rng);
  const Polynomial e1 = ring::sample_error(ctx, rng);
  const Polynomial e2 = ring::sample_error(ctx, rng);

  Ciphertext ct;
  if (ctx->has_ntt()) {
    const ring::NttPolynomial u_ntt = ring::to_ntt(u);
    ct.c0 = ring::mul_ntt(pk.b_ntt, u_ntt);
    ct.c1 = ring::mul_ntt(pk.a_ntt, u_ntt);
  } else {
    ct.c0 = ring::mul(pk.b, u);
    ct.c1 = ring::mul(pk.a, u);
  }
  ring::add_inplace(ct.c0, e1);
  ring::add_inplace(ct.c1, e2);
  detail::add_scaled_message(*ctx, pt.coeffs, ct.c0, false);
  ct.noise_bound = fresh_noise_bound(*ctx);
  ct.scale_bits = pt.scale_bits;
  return ct;
}

inline Polynomial phase(const SecretKey& sk, const Ciphertext& ct) {
  if (!ring::same_ring(sk.s, ct.c0)) throw ParameterMismatchError("key and ciphertext rings differ");
  Polynomial s_c1 = sk.s.context().has_ntt() ? ring::mul_ntt(sk.s_ntt, ring::to_ntt(ct.c1))
                                             : ring::mul(sk.s, ct.c1);
  return ring::add(ct.c0, s_c1);
}

// round(t * (c0 + s*c1) / q) mod t, per coefficient. Refuses once the
// tracked noise no longer leaves a full bit of headroom.
inline Plaintext decrypt(const SecretKey& sk, const Ciphertext& ct,
                         Encoding encoding = Encoding::kCoefficient) {
  if (noise_budget_bits(ct) == 0) {
    throw NoiseBudgetError("noise budget exhausted: bound 2^" +
                           std::to_string(std::log2(std::max(ct.noise_bound, 1.0))) +
                           " vs threshold 2^" + std::to_string(log2_threshold(*ct.context())));
  }
  const Polynomial x = phase(sk, ct);
  const RingContext& ctx = x.context();
  const u64 t = ctx.t();
  Plaintext pt;
  pt.ctx = ct.context();
  pt.coeffs.resize(ctx.n());
  pt.slot_count = ctx.n();
  pt.scale_bits = ct.scale_bits;
  pt.encoding = encoding;
  if (ctx.limbs() == 1) {
    const u64 q = ctx.modulus(0).value();
    const u128 half = (q - 1) / 2;
    auto xs = x.limb(0);
    for (std::size_t i = 0; i < ctx.n(); ++i) {
      pt.coeffs[i] = static_cast<u64>(((u128{xs[i]} * t + half) / q) % t);
    }
  } else {
    const BigInt& q = ctx.q();
    const BigInt half = (q - 1) / 2;
    for (std::size_t i = 0; i < ctx.n(); ++i) {
      BigInt v = (x.coefficient(i) * t + half) / q;
      pt.coeffs[i] = static_cast<u64>(v % t);
    }
  }
  return pt;
}

// Exact infinity norm of c0 + s*c1 - round(q*expected/t). Diagnostic only:
// needs the secret key.
inline BigInt measure_noise(const SecretKey& sk, const Ciphertext& ct, const Plaintext& expected) {
  Polynomial v = phase(sk, ct);
  const RingContext& ctx = v.context();
  detail::add_scaled_message(ctx, expected.coeffs, v, true);
  return ring::infinity_norm(v);
}

// ---- homomorphic operations ----

inline void require_compatible(const Ciphertext& a, const Ciphertext& b) {
  if (!ring::same_ring(a.c0, b.c0)) throw ParameterMismatchError("ciphertexts use different rings");
  if (a.scale_bits != b.scale_bits) {
    throw ParameterMismatchError("ciphertexts use different fixed-point scales");
  }
}

inline void add_inplace(Ciphertext& acc, const Ciphertext& ct) {
  require_compatible(acc, ct);
  ring::add_inplace(acc.c0, ct.c0);
  ring::add_inplace(acc.c1, ct.c1);
  // Plus the rounding of round(q*m/t) on both inputs and the output.
  acc.noise_bound = detail::round_up(acc.noise_bound + ct.noise_bound + detail::kRoundingDrift);
  acc.ops_depth = std::max(acc.ops_depth, ct.ops_depth);
}

inline Ciphertext add(const Ciphertext& a, const Ciphertext& b) {
  Ciphertext r = a;
  add_inplace(r, b);
  return r;
}

// Multiplies both components by the centered lift of pt. The bound follows
// from |e*p| <= nnz(p)*max|p|*|e| plus the rounding slack of the wrapped
// integer product.
inline Ciphertext mul_plain(const Ciphertext& ct, const Plaintext& pt) {
  const RingContextPtr& ctx = ct.context();
  if (pt.ctx == nullptr || pt.ctx->params() != ctx->params()) {
    throw ParameterMismatchError("plaintext and ciphertext use different rings");
  }
  const u64 t = ctx->t();
  double max_abs = 0.0;
  std::size_t nnz = 0;
  for (u64 c : pt.coeffs) {
    if (c == 0) continue;
    ++nnz;
    max_abs = std::max(max_abs, static_cast<double>(2 * c > t ? t - c : c));
  }

  Ciphertext r;
  if (pt.is_constant()) {
    const u64 c = pt.coeffs[0];
    const std::int64_t w = 2 * c > t ? -static_cast<std::int64_t>(t - c) : static_cast<std::int64_t>(c);
    r.c0 = ring::scalar_mul(ct.c0, w);
    r.c1 = ring::scalar_mul(ct.c1, w);
  } else {
    Polynomial p(ctx);
    detail::lift_centered(*ctx, pt.coeffs, p);
    if (ctx->has_ntt()) {
      const ring::NttPolynomial p_ntt = ring::to_ntt(p);
      r.c0 = ring::mul_ntt(ring::to_ntt(ct.c0), p_ntt);
      r.c1 = ring::mul_ntt(ring::to_ntt(ct.c1), p_ntt);
    } else {
      r.c0 = ring::mul(ct.c0, p);
      r.c1 = ring::mul(ct.c1, p);
    }
  }
  const double drift = detail::kRoundingDrift;
  r.noise_bound = detail::round_up(static_cast<double>(nnz) * max_abs * (ct.noise_bound + drift) + drift);
  r.noise_bound = std::max(r.noise_bound, ct.noise_bound);
  r.ops_depth = ct.ops_depth + 1;
  r.scale_bits = ct.scale_bits + pt.scale_bits;
  return r;
}

inline Ciphertext mul_scalar(const Ciphertext& ct, std::int64_t w) {
  return mul_plain(ct, scalar_plaintext(ct.context(), w));
}

inline bool budget_exhausted(const Ciphertext& ct) { return noise_budget_bits(ct) == 0; }

// ---- wire format ----
// "SEFL" | u8 version | u32 n | u32 limbs | u64 q[limbs] | u64 t |
// u32 scale_bits | c0 | c1 | f64 noise_bound, little-endian throughout.

inline constexpr std::uint8_t kWireVersion = 1;

namespace detail {

inline void put_params(std::vector<std::uint8_t>& out, const RingParams& p) {
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.n));
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.moduli.size()));
  for (u64 q : p.moduli) bytes::put_le<u64>(out, q);
  bytes::put_le<u64>(out, p.t);
}

inline RingParams get_params(bytes::Reader& in) {
  RingParams p;
  p.n = in.get_le<std::uint32_t>();
  const auto limbs = in.get_le<std::uint32_t>();
  if (limbs == 0 || limbs > 64) throw FormatError("implausible limb count");
  for (std::uint32_t l = 0; l < limbs; ++l) p.moduli.push_back(in.get_le<u64>());
  p.t = in.get_le<u64>();
  return p;
}

inline void expect_magic(bytes::Reader& in, const char* magic) {
  auto m = in.take(4);
  if (!std::equal(m.begin(), m.end(), magic)) throw FormatError("bad magic bytes");
  const auto version = in.get_le<std::uint8_t>();
  if (version != kWireVersion) throw FormatError("unsupported version " + std::to_string(version));
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Ciphertext& ct) {
  std::vector<std::uint8_t> out;
  const RingParams& p = ct.context()->params();
  out.reserve(4 + 1 + 8 + 8 * p.moduli.size() + 8 + 4 + 2 * ring::serialized_size(*ct.context()) + 8);
  for (char c : {'S', 'E', 'F', 'L'}) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(kWireVersion);
  detail::put_params(out, p);
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ct.scale_bits));
  ring::serialize(ct.c0, out);
  ring::serialize(ct.c1, out);
  bytes::put_f64(out, ct.noise_bound);
  return out;
}

inline std::size_t serialized_size(const RingContext& ctx) {
  return 4 + 1 + 8 + 8 * ctx.limbs() + 8 + 4 + 2 * ring::serialized_size(ctx) + 8;
}

// Parses a ciphertext into the given ring; the embedded parameters must match.
inline Ciphertext deserialize(std::span<const std::uint8_t> data, const RingContextPtr& ctx) {
  bytes::Reader in(data);
  detail::expect_magic(in, "SEFL");
  RingParams p = detail::get_params(in);
  const RingParams& want = ctx->params();
  if (p.n != want.n || p.moduli != want.moduli || p.t != want.t) {
    throw ParameterMismatchError("ciphertext was produced under different ring parameters");
  }
  Ciphertext ct;
  ct.scale_bits = static_cast<int>(in.get_le<std::uint32_t>());
  ct.c0 = ring::deserialize(ctx, in);
  ct.c1 = ring::deserialize(ctx, in);
  ct.noise_bound = in.get_f64();
  if (!(ct.noise_bound >= 0.0)) throw FormatError("invalid noise bound");
  if (in.remaining() != 0) throw FormatError("trailing bytes after ciphertext");
  return ct;
}

// Parses a ciphertext, building its ring from the embedded parameters.
inline Ciphertext deserialize(std::span<const std::uint8_t> data) {
  bytes::Reader in(data);
  detail::expect_magic(in, "SEFL");
  RingParams p = detail::get_params(in);
  try {
    return deserialize(data, RingContext::create(p));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid ring parameters: ") + e.what());
  }
}

// ---- key files ----
// "SEFK" | u8 version | u8 kind (1 public, 2 key pair) | params | f64 sigma |
// a | b [| s].

inline std::vector<std::uint8_t> serialize_keys(const KeyPair& kp, bool include_secret) {
  std::vector<std::uint8_t> out{'S', 'E', 'F', 'K', kWireVersion};
  out.push_back(include_secret ? 2 : 1);
  detail::put_params(out, kp.params());
  bytes::put_f64(out, kp.params().sigma_err);
  ring::serialize(kp.pk.a, out);
  ring::serialize(kp.pk.b, out);
  if (include_secret) ring::serialize(kp.sk.s, out);
  return out;
}

// Returns the key pair; sk.s is empty when the file holds only a public key.
inline KeyPair deserialize_keys(std::span<const std::uint8_t> data) {
  bytes::Reader in(data);
  detail::expect_magic(in, "SEFK");
  const auto kind = in.get_le<std::uint8_t>();
  if (kind != 1 && kind != 2) throw FormatError("unknown key file kind");
  RingParams p = detail::get_params(in);
  p.sigma_err = in.get_f64();
  RingContextPtr ctx;
  try {
    ctx = RingContext::create(p);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid ring parameters: ") + e.what());
  }
  KeyPair kp;
  kp.pk.a = ring::deserialize(ctx, in);
  kp.pk.b = ring::deserialize(ctx, in);
  refresh_caches(kp.pk);
  if (kind == 2) {
    kp.sk.s = ring::deserialize(ctx, in);
    refresh_caches(kp.sk);
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after key material");
  return kp;
}

}  // namespace sefl::he
