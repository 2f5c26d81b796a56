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

#include <bit>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sefl/bytes.hpp"
#include "sefl/errors.hpp"
#include "sefl/modmath.hpp"
#include "sefl/ntt.hpp"
#include "sefl/random.hpp"

namespace sefl {

using BigInt = boost::multiprecision::cpp_int;

// Parameters of R_q = Z_q[x]/(x^n + 1) plus the plaintext modulus t that the
// HE layer uses. q may be a product of several word-sized limbs (RNS form).
struct RingParams {
  std::size_t n = 0;
  std::vector<u64> moduli;
  u64 t = 0;
  double sigma_err = 3.2;

  void validate() const {
    if (n < 4 || !std::has_single_bit(n)) {
      throw std::invalid_argument("ring degree must be a power of two >= 4");
    }
    if (moduli.empty()) throw std::invalid_argument("at least one modulus limb is required");
    for (std::size_t i = 0; i < moduli.size(); ++i) {
      const u64 q = moduli[i];
      if (q < 3 || q >= (u64{1} << 62) || q % 2 == 0) {
        throw std::invalid_argument("modulus limbs must be odd and below 2^62");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (gcd(q, moduli[j]) != 1) throw std::invalid_argument("modulus limbs must be coprime");
      }
      if (gcd(t, q) != 1) throw std::invalid_argument("gcd(t, q) must be 1");
    }
    if (t < 2) throw std::invalid_argument("plaintext modulus must be >= 2");
    if (BigInt(t) >= q()) throw std::invalid_argument("plaintext modulus must be below q");
    if (!(sigma_err > 0.0) || !std::isfinite(sigma_err)) {
      throw std::invalid_argument("sigma_err must be positive");
    }
  }

  BigInt q() const {
    BigInt q = 1;
    for (u64 m : moduli) q *= m;
    return q;
  }

  friend bool operator==(const RingParams&, const RingParams&) = default;
};

// Precomputed, immutable per-ring data shared by every polynomial of a ring.
class RingContext {
 public:
  static std::shared_ptr<const RingContext> create(RingParams params) {
    params.validate();
    return std::shared_ptr<const RingContext>(new RingContext(std::move(params)));
  }

  const RingParams& params() const { return params_; }
  std::size_t n() const { return params_.n; }
  std::size_t limbs() const { return moduli_.size(); }
  u64 t() const { return params_.t; }
  const Modulus& modulus(std::size_t i) const { return moduli_[i]; }
  bool has_ntt() const { return !ntt_.empty(); }
  const NttTables& ntt(std::size_t i) const { return ntt_[i]; }
  // Transform over Z_t, present when t is a prime = 1 mod 2n (slot batching).
  const NttTables* plain_ntt() const { return plain_ntt_ ? &*plain_ntt_ : nullptr; }

  const BigInt& q() const { return q_; }
  double log2_q() const { return log2_q_; }
  // floor(q / t), reduced per limb.
  u64 delta_mod(std::size_t i) const { return delta_mod_[i]; }
  const BigInt& delta() const { return delta_; }
  // q mod t: the rounding drift added whenever a plaintext wraps mod t.
  u64 q_mod_t() const { return q_mod_t_; }
  // Centered-binomial parameter k; samples lie in [-k, k] with variance k/2.
  int cbd_k() const { return cbd_k_; }

  // CRT reconstruction of one coefficient from its residues.
  BigInt compose(std::span<const u64> residues) const {
    if (limbs() == 1) return BigInt(residues[0]);
    BigInt x = 0;
    for (std::size_t i = 0; i < limbs(); ++i) {
      const u64 y = moduli_[i].mul(residues[i], q_hat_inv_[i]);
      x += q_hat_[i] * y;
    }
    return x % q_;
  }

 private:
  explicit RingContext(RingParams params) : params_(std::move(params)) {
    bool ntt_ok = true;
    for (u64 q : params_.moduli) {
      moduli_.emplace_back(q);
      ntt_ok = ntt_ok && NttTables::supports(params_.n, q);
    }
    if (ntt_ok) {
      ntt_.reserve(moduli_.size());
      for (const auto& m : moduli_) ntt_.emplace_back(params_.n, m);
    }
    if (NttTables::supports(params_.n, params_.t) && params_.t < (u64{1} << 62)) {
      plain_ntt_.emplace(params_.n, Modulus(params_.t));
    }
    q_ = params_.q();
    log2_q_ = 0.0;
    for (u64 q : params_.moduli) log2_q_ += std::log2(static_cast<double>(q));
    delta_ = q_ / params_.t;
    q_mod_t_ = static_cast<u64>(q_ % params_.t);
    for (const auto& m : moduli_) delta_mod_.push_back(static_cast<u64>(delta_ % m.value()));
    if (moduli_.size() > 1) {
      for (const auto& m : moduli_) {
        BigInt hat = q_ / m.value();
        q_hat_.push_back(hat);
        // Limbs are only required to be coprime, so invert with extended
        // Euclid rather than Fermat.
        q_hat_inv_.push_back(inverse_mod(static_cast<u64>(hat % m.value()), m.value()));
      }
    }
    cbd_k_ = std::max(1, static_cast<int>(std::lround(2.0 * params_.sigma_err * params_.sigma_err)));
  }

  static u64 inverse_mod(u64 a, u64 m) {
    std::int64_t old_r = static_cast<std::int64_t>(a), r = static_cast<std::int64_t>(m);
    __int128 old_s = 1, s = 0;
    while (r != 0) {
      const std::int64_t quotient = old_r / r;
      std::int64_t tmp = old_r - quotient * r;
      old_r = r;
      r = tmp;
      __int128 tmp_s = old_s - quotient * s;
      old_s = s;
      s = tmp_s;
    }
    if (old_r != 1) throw std::invalid_argument("limbs are not coprime");
    __int128 v = old_s % static_cast<__int128>(m);
    if (v < 0) v += m;
    return static_cast<u64>(v);
  }

  RingParams params_;
  std::vector<Modulus> moduli_;
  std::vector<NttTables> ntt_;
  std::optional<NttTables> plain_ntt_;
  BigInt q_;
  double log2_q_ = 0.0;
  BigInt delta_;
  std::vector<u64> delta_mod_;
  u64 q_mod_t_ = 0;
  std::vector<BigInt> q_hat_;
  std::vector<u64> q_hat_inv_;
  int cbd_k_ = 1;
};

using RingContextPtr = std::shared_ptr<const RingContext>;

// Element of R_q in RNS form: limb-major, limbs() blocks of n residues.
class Polynomial {
 public:
  Polynomial() = default;

  explicit Polynomial(RingContextPtr ctx)
      : ctx_(std::move(ctx)), data_(ctx_->n() * ctx_->limbs(), 0) {}

  static Polynomial from_signed(RingContextPtr ctx, std::span<const std::int64_t> coeffs) {
    if (coeffs.size() > ctx->n()) throw std::invalid_argument("too many coefficients");
    Polynomial p(std::move(ctx));
    for (std::size_t l = 0; l < p.ctx_->limbs(); ++l) {
      const Modulus& q = p.ctx_->modulus(l);
      auto dst = p.limb(l);
      for (std::size_t i = 0; i < coeffs.size(); ++i) dst[i] = q.from_signed(coeffs[i]);
    }
    return p;
  }

  // Each value is reduced independently into every limb.
  static Polynomial from_unsigned(RingContextPtr ctx, std::span<const u64> coeffs) {
    if (coeffs.size() > ctx->n()) throw std::invalid_argument("too many coefficients");
    Polynomial p(std::move(ctx));
    for (std::size_t l = 0; l < p.ctx_->limbs(); ++l) {
      const Modulus& q = p.ctx_->modulus(l);
      auto dst = p.limb(l);
      for (std::size_t i = 0; i < coeffs.size(); ++i) dst[i] = q.reduce(coeffs[i]);
    }
    return p;
  }

  static Polynomial from_limbs(RingContextPtr ctx, std::vector<u64> data) {
    if (data.size() != ctx->n() * ctx->limbs()) throw std::invalid_argument("wrong data size");
    Polynomial p;
    p.ctx_ = std::move(ctx);
    for (std::size_t l = 0; l < p.ctx_->limbs(); ++l) {
      const u64 q = p.ctx_->modulus(l).value();
      for (std::size_t i = 0; i < p.ctx_->n(); ++i) {
        if (data[l * p.ctx_->n() + i] >= q) throw std::invalid_argument("residue out of range");
      }
    }
    p.data_ = std::move(data);
    return p;
  }

  bool empty() const { return ctx_ == nullptr; }
  const RingContext& context() const { return *ctx_; }
  const RingContextPtr& context_ptr() const { return ctx_; }
  std::size_t degree() const { return ctx_->n(); }

  std::span<u64> limb(std::size_t l) { return {data_.data() + l * ctx_->n(), ctx_->n()}; }
  std::span<const u64> limb(std::size_t l) const {
    return {data_.data() + l * ctx_->n(), ctx_->n()};
  }
  std::span<const u64> data() const { return data_; }

  std::vector<u64> residues(std::size_t i) const {
    std::vector<u64> r(ctx_->limbs());
    for (std::size_t l = 0; l < r.size(); ++l) r[l] = data_[l * ctx_->n() + i];
    return r;
  }

  // Coefficient i as an integer in [0, q).
  BigInt coefficient(std::size_t i) const { return ctx_->compose(residues(i)); }

  bool is_zero() const {
    for (u64 v : data_) {
      if (v != 0) return false;
    }
    return true;
  }

  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    if (a.ctx_ == nullptr || b.ctx_ == nullptr) return a.ctx_ == b.ctx_;
    return a.ctx_->params() == b.ctx_->params() && a.data_ == b.data_;
  }

 private:
  RingContextPtr ctx_;
  std::vector<u64> data_;
};

namespace ring {

inline bool same_ring(const Polynomial& a, const Polynomial& b) {
  if (a.empty() || b.empty()) return false;
  return a.context_ptr() == b.context_ptr() || a.context().params() == b.context().params();
}

inline void require_same_ring(const Polynomial& a, const Polynomial& b) {
  if (!same_ring(a, b)) throw ParameterMismatchError("polynomials belong to different rings");
}

inline Polynomial add(const Polynomial& a, const Polynomial& b) {
  require_same_ring(a, b);
  Polynomial r(a.context_ptr());
  for (std::size_t l = 0; l < a.context().limbs(); ++l) {
    const Modulus& q = a.context().modulus(l);
    auto x = a.limb(l), y = b.limb(l);
    auto z = r.limb(l);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.add(x[i], y[i]);
  }
  return r;
}

inline void add_inplace(Polynomial& acc, const Polynomial& b) {
  require_same_ring(acc, b);
  for (std::size_t l = 0; l < acc.context().limbs(); ++l) {
    const Modulus& q = acc.context().modulus(l);
    auto x = acc.limb(l);
    auto y = b.limb(l);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = q.add(x[i], y[i]);
  }
}

inline Polynomial sub(const Polynomial& a, const Polynomial& b) {
  require_same_ring(a, b);
  Polynomial r(a.context_ptr());
  for (std::size_t l = 0; l < a.context().limbs(); ++l) {
    const Modulus& q = a.context().modulus(l);
    auto x = a.limb(l), y = b.limb(l);
    auto z = r.limb(l);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.sub(x[i], y[i]);
  }
  return r;
}

inline Polynomial negate(const Polynomial& a) {
  Polynomial r(a.context_ptr());
  for (std::size_t l = 0; l < a.context().limbs(); ++l) {
    const Modulus& q = a.context().modulus(l);
    auto x = a.limb(l);
    auto z = r.limb(l);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.neg(x[i]);
  }
  return r;
}

inline Polynomial scalar_mul(const Polynomial& a, std::int64_t c) {
  Polynomial r(a.context_ptr());
  for (std::size_t l = 0; l < a.context().limbs(); ++l) {
    const Modulus& q = a.context().modulus(l);
    const ShoupConstant w(q.from_signed(c), q.value());
    auto x = a.limb(l);
    auto z = r.limb(l);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = w.mul(x[i], q.value());
  }
  return r;
}

// O(n^2) negacyclic convolution; the fallback when a limb is not NTT-friendly.
inline Polynomial mul_schoolbook(const Polynomial& a, const Polynomial& b) {
  require_same_ring(a, b);
  const std::size_t n = a.degree();
  Polynomial r(a.context_ptr());
  for (std::size_t l = 0; l < a.context().limbs(); ++l) {
    const Modulus& q = a.context().modulus(l);
    auto x = a.limb(l), y = b.limb(l);
    auto z = r.limb(l);
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] == 0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const u64 p = q.mul(x[i], y[j]);
        const std::size_t k = i + j;
        if (k < n) {
          z[k] = q.add(z[k], p);
        } else {
          z[k - n] = q.sub(z[k - n], p);
        }
      }
    }
  }
  return r;
}

// Polynomial held in the evaluation domain of the negacyclic NTT.
struct NttPolynomial {
  RingContextPtr ctx;
  std::vector<u64> data;
};

inline NttPolynomial to_ntt(const Polynomial& a) {
  const RingContext& ctx = a.context();
  if (!ctx.has_ntt()) throw std::logic_error("ring has no NTT");
  NttPolynomial r{a.context_ptr(), std::vector<u64>(a.data().begin(), a.data().end())};
  for (std::size_t l = 0; l < ctx.limbs(); ++l) {
    ctx.ntt(l).forward(std::span<u64>(r.data.data() + l * ctx.n(), ctx.n()));
  }
  return r;
}

// Pointwise product of an evaluation-domain operand with a coefficient-domain
// operand, returned in coefficient domain.
inline Polynomial mul_ntt(const NttPolynomial& a, const NttPolynomial& b) {
  const RingContext& ctx = *a.ctx;
  std::vector<u64> out(a.data.size());
  for (std::size_t l = 0; l < ctx.limbs(); ++l) {
    const Modulus& q = ctx.modulus(l);
    const std::size_t off = l * ctx.n();
    for (std::size_t i = 0; i < ctx.n(); ++i) out[off + i] = q.mul(a.data[off + i], b.data[off + i]);
    ctx.ntt(l).inverse(std::span<u64>(out.data() + off, ctx.n()));
  }
  Polynomial r(a.ctx);
  for (std::size_t l = 0; l < ctx.limbs(); ++l) {
    auto dst = r.limb(l);
    std::copy_n(out.begin() + static_cast<std::ptrdiff_t>(l * ctx.n()), ctx.n(), dst.begin());
  }
  return r;
}

inline Polynomial mul(const Polynomial& a, const Polynomial& b) {
  require_same_ring(a, b);
  if (!a.context().has_ntt()) return mul_schoolbook(a, b);
  return mul_ntt(to_ntt(a), to_ntt(b));
}

// Centered representative of x mod q in (-q/2, q/2].
inline std::int64_t centered(u64 x, u64 q) {
  return x > q / 2 ? -static_cast<std::int64_t>(q - x) : static_cast<std::int64_t>(x);
}

inline BigInt centered(const BigInt& x, const BigInt& q) { return x > q / 2 ? x - q : x; }

// Largest centered coefficient magnitude, computed exactly via CRT.
inline BigInt infinity_norm(const Polynomial& a) {
  BigInt best = 0;
  const BigInt& q = a.context().q();
  for (std::size_t i = 0; i < a.degree(); ++i) {
    BigInt c = centered(a.coefficient(i), q);
    if (c < 0) c = -c;
    if (c > best) best = c;
  }
  return best;
}

// ---- samplers ----

// Uniform ternary {-1, 0, 1} as signed integers.
inline std::vector<std::int64_t> sample_ternary_signed(std::size_t n, Prng& rng) {
  std::vector<std::int64_t> out;
  out.reserve(n);
  while (out.size() < n) {
    u64 word = rng();
    for (int k = 0; k < 32 && out.size() < n; ++k, word >>= 2) {
      const int v = static_cast<int>(word & 3);
      if (v == 3) continue;
      out.push_back(v - 1);
    }
  }
  return out;
}

// Centered binomial with parameter k: sum of k coin flips minus k others.
inline std::vector<std::int64_t> sample_cbd_signed(std::size_t n, int k, Prng& rng) {
  std::vector<std::int64_t> out(n);
  for (auto& v : out) {
    int remaining = k;
    std::int64_t acc = 0;
    while (remaining > 0) {
      const int take = std::min(remaining, 32);
      const u64 mask = take == 32 ? 0xffffffffULL : ((u64{1} << take) - 1);
      const u64 w = rng();
      acc += std::popcount(w & mask) - std::popcount((w >> 32) & mask);
      remaining -= take;
    }
    v = acc;
  }
  return out;
}

inline Polynomial sample_secret(const RingContextPtr& ctx, Prng& rng) {
  return Polynomial::from_signed(ctx, sample_ternary_signed(ctx->n(), rng));
}

inline std::vector<std::int64_t> sample_error_signed(const RingContext& ctx, Prng& rng) {
  return sample_cbd_signed(ctx.n(), ctx.cbd_k(), rng);
}

inline Polynomial sample_error(const RingContextPtr& ctx, Prng& rng) {
  return Polynomial::from_signed(ctx, sample_error_signed(*ctx, rng));
}

inline Polynomial sample_uniform(const RingContextPtr& ctx, Prng& rng) {
  Polynomial p(ctx);
  for (std::size_t l = 0; l < ctx->limbs(); ++l) {
    const u64 q = ctx->modulus(l).value();
    for (auto& x : p.limb(l)) x = rng.uniform_below(q);
  }
  return p;
}

// ---- binary encoding ----
// u32 n, u32 limb count, then per coefficient limb-count u64 residues, all
// little-endian.

inline void serialize(const Polynomial& p, std::vector<std::uint8_t>& out) {
  const std::size_t n = p.degree(), limbs = p.context().limbs();
  out.reserve(out.size() + 8 + n * limbs * 8);
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(limbs));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < limbs; ++l) bytes::put_le<u64>(out, p.limb(l)[i]);
  }
}

inline std::vector<std::uint8_t> serialize(const Polynomial& p) {
  std::vector<std::uint8_t> out;
  serialize(p, out);
  return out;
}

inline std::size_t serialized_size(const RingContext& ctx) { return 8 + ctx.n() * ctx.limbs() * 8; }

inline Polynomial deserialize(const RingContextPtr& ctx, bytes::Reader& in) {
  const auto n = in.get_le<std::uint32_t>();
  const auto limbs = in.get_le<std::uint32_t>();
  if (n != ctx->n() || limbs != ctx->limbs()) {
    throw FormatError("polynomial header does not match ring (n=" + std::to_string(n) +
                      ", limbs=" + std::to_string(limbs) + ")");
  }
  Polynomial p(ctx);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < limbs; ++l) {
      const u64 v = in.get_le<u64>();
      if (v >= ctx->modulus(l).value()) throw FormatError("residue out of range");
      p.limb(l)[i] = v;
    }
  }
  return p;
}

inline Polynomial deserialize(const RingContextPtr& ctx, std::span<const std::uint8_t> data) {
  bytes::Reader in(data);
  Polynomial p = deserialize(ctx, in);
  if (in.remaining() != 0) throw FormatError("trailing bytes after polynomial");
  return p;
}

}  // namespace ring
}  // namespace sefl
