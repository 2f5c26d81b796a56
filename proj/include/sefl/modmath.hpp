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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sefl {

using u64 = std::uint64_t;
using u128 = unsigned __int128;

// Word-sized modulus with cached Barrett constants. Values must be < 2^62 so
// that lazy sums of two residues never overflow and Shoup products fit.
class Modulus {
 public:
  Modulus() = default;
  explicit Modulus(u64 value) : value_(value) {
    if (value < 2 || value >= (u64{1} << 62)) {
      throw std::invalid_argument("modulus must lie in [2, 2^62), got " +
                                  std::to_string(value));
    }
    // floor(2^128 / q) as two words.
    u128 hi = (u128{1} << 64) / value;  // floor(2^64 / q) < 2^63
    u128 rem = (u128{1} << 64) - hi * value;
    u128 lo = (rem << 64) / value;
    ratio_hi_ = static_cast<u64>(hi);
    ratio_lo_ = static_cast<u64>(lo);
  }

  u64 value() const { return value_; }

  u64 reduce(u64 x) const { return x % value_; }

  // Reduces a 128-bit integer modulo q.
  u64 reduce128(u128 z) const {
    const u64 z0 = static_cast<u64>(z);
    const u64 z1 = static_cast<u64>(z >> 64);
    const u128 a = u128{z0} * ratio_lo_;
    const u128 b = u128{z0} * ratio_hi_;
    const u128 c = u128{z1} * ratio_lo_;
    const u128 mid = (a >> 64) + static_cast<u64>(b) + static_cast<u64>(c);
    const u64 qhat = static_cast<u64>(u128{z1} * ratio_hi_ + (b >> 64) +
                                      (c >> 64) + (mid >> 64));
    u64 r = z0 - qhat * value_;
    while (r >= value_) r -= value_;
    return r;
  }

  u64 add(u64 a, u64 b) const {
    u64 s = a + b;
    return s >= value_ ? s - value_ : s;
  }
  u64 sub(u64 a, u64 b) const { return a >= b ? a - b : a + value_ - b; }
  u64 neg(u64 a) const { return a == 0 ? 0 : value_ - a; }
  u64 mul(u64 a, u64 b) const { return reduce128(u128{a} * b); }

  u64 pow(u64 base, u64 exp) const {
    u64 result = 1 % value_;
    base %= value_;
    while (exp != 0) {
      if (exp & 1) result = mul(result, base);
      base = mul(base, base);
      exp >>= 1;
    }
    return result;
  }

  // Inverse for prime moduli (Fermat).
  u64 inv(u64 a) const {
    if (a % value_ == 0) throw std::domain_error("zero has no inverse");
    return pow(a, value_ - 2);
  }

  // Lifts a signed integer into [0, q).
  u64 from_signed(std::int64_t v) const {
    if (v >= 0) return static_cast<u64>(v) % value_;
    u64 m = static_cast<u64>(-(v + 1)) % value_;  // avoids INT64_MIN overflow
    return value_ - 1 - m;
  }

  friend bool operator==(const Modulus& a, const Modulus& b) {
    return a.value_ == b.value_;
  }

 private:
  u64 value_ = 0;
  u64 ratio_hi_ = 0;
  u64 ratio_lo_ = 0;
};

// Multiplication by a fixed operand w using a precomputed Shoup quotient.
struct ShoupConstant {
  u64 operand = 0;
  u64 quotient = 0;  // floor(w * 2^64 / q)

  ShoupConstant() = default;
  ShoupConstant(u64 w, u64 q)
      : operand(w), quotient(static_cast<u64>((u128{w} << 64) / q)) {}

  u64 mul(u64 x, u64 q) const {
    const u64 hi = static_cast<u64>((u128{x} * quotient) >> 64);
    u64 r = x * operand - hi * q;
    return r >= q ? r - q : r;
  }
};

namespace detail {

inline u64 mulmod_slow(u64 a, u64 b, u64 m) {
  return static_cast<u64>((u128{a} * b) % m);
}

inline u64 powmod_slow(u64 base, u64 exp, u64 m) {
  u64 result = 1 % m;
  base %= m;
  while (exp != 0) {
    if (exp & 1) result = mulmod_slow(result, base, m);
    base = mulmod_slow(base, base, m);
    exp >>= 1;
  }
  return result;
}

}  // namespace detail

// Deterministic Miller-Rabin; the first twelve prime bases are exact for all
// 64-bit inputs.
inline bool is_prime(u64 n) {
  if (n < 2) return false;
  static constexpr u64 kBases[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (u64 p : kBases) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (u64 a : kBases) {
    u64 x = detail::powmod_slow(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = detail::mulmod_slow(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

// The `count` largest primes below 2^bits that are congruent to 1 mod 2n.
inline std::vector<u64> ntt_primes(int bits, std::size_t n, std::size_t count) {
  if (bits < 4 || bits > 61) throw std::invalid_argument("prime bits out of range");
  const u64 step = 2 * static_cast<u64>(n);
  const u64 top = u64{1} << bits;
  std::vector<u64> primes;
  u64 candidate = top - (top % step) + 1;
  if (candidate >= top) candidate -= step;
  while (primes.size() < count && candidate > step) {
    if (is_prime(candidate)) primes.push_back(candidate);
    candidate -= step;
  }
  if (primes.size() < count) throw std::runtime_error("not enough NTT primes");
  return primes;
}

// Smallest prime p >= lower_bound with p = 1 mod 2n.
inline u64 smallest_ntt_prime_at_least(u64 lower_bound, std::size_t n) {
  const u64 step = 2 * static_cast<u64>(n);
  u64 candidate = ((lower_bound + step - 2) / step) * step + 1;
  while (!is_prime(candidate)) candidate += step;
  return candidate;
}

inline u64 gcd(u64 a, u64 b) {
  while (b != 0) {
    u64 r = a % b;
    a = b;
    b = r;
  }
  return a;
}

}  // namespace sefl
