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
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "sefl/modmath.hpp"

namespace sefl {

// Negacyclic number-theoretic transform over Z_q[x]/(x^n + 1), q = 1 mod 2n.
// Forward output is in bit-reversed order; inverse consumes that order and
// returns natural order, so pointwise products need no reordering.
class NttTables {
 public:
  NttTables(std::size_t n, const Modulus& q) : n_(n), q_(q) {
    if (!std::has_single_bit(n) || n < 2) throw std::invalid_argument("n must be a power of two");
    if ((q.value() - 1) % (2 * n) != 0) throw std::invalid_argument("modulus is not NTT-friendly");
    const u64 psi = find_psi();
    const u64 psi_inv = q_.inv(psi);
    const int log_n = std::countr_zero(n);
    fwd_.resize(n);
    inv_.resize(n);
    u64 power = 1, power_inv = 1;
    std::vector<u64> pw(n), pw_inv(n);
    for (std::size_t i = 0; i < n; ++i) {
      pw[i] = power;
      pw_inv[i] = power_inv;
      power = q_.mul(power, psi);
      power_inv = q_.mul(power_inv, psi_inv);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = bit_reverse(i, log_n);
      fwd_[i] = ShoupConstant(pw[r], q_.value());
      inv_[i] = ShoupConstant(pw_inv[r], q_.value());
    }
    n_inv_ = ShoupConstant(q_.inv(static_cast<u64>(n) % q_.value()), q_.value());
    psi_ = psi;
  }

  static bool supports(std::size_t n, u64 q) {
    return std::has_single_bit(n) && n >= 2 && q > 2 && (q - 1) % (2 * n) == 0 && is_prime(q);
  }

  std::size_t degree() const { return n_; }
  const Modulus& modulus() const { return q_; }
  u64 psi() const { return psi_; }

  void forward(std::span<u64> a) const {
    const u64 q = q_.value();
    std::size_t t = n_;
    for (std::size_t m = 1; m < n_; m <<= 1) {
      t >>= 1;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j1 = 2 * i * t;
        const ShoupConstant& w = fwd_[m + i];
        for (std::size_t j = j1; j < j1 + t; ++j) {
          const u64 u = a[j];
          const u64 v = w.mul(a[j + t], q);
          const u64 s = u + v;
          a[j] = s >= q ? s - q : s;
          a[j + t] = u >= v ? u - v : u + q - v;
        }
      }
    }
  }

  void inverse(std::span<u64> a) const {
    const u64 q = q_.value();
    std::size_t t = 1;
    for (std::size_t m = n_; m > 1; m >>= 1) {
      const std::size_t h = m >> 1;
      std::size_t j1 = 0;
      for (std::size_t i = 0; i < h; ++i) {
        const ShoupConstant& w = inv_[h + i];
        for (std::size_t j = j1; j < j1 + t; ++j) {
          const u64 u = a[j];
          const u64 v = a[j + t];
          const u64 s = u + v;
          a[j] = s >= q ? s - q : s;
          a[j + t] = w.mul(u >= v ? u - v : u + q - v, q);
        }
        j1 += 2 * t;
      }
      t <<= 1;
    }
    for (auto& x : a) x = n_inv_.mul(x, q);
  }

 private:
  static std::size_t bit_reverse(std::size_t x, int bits) {
    std::size_t r = 0;
    for (int i = 0; i < bits; ++i) {
      r = (r << 1) | (x & 1);
      x >>= 1;
    }
    return r;
  }

  // Smallest primitive 2n-th root of unity reachable from small generators.
  u64 find_psi() const {
    const u64 q = q_.value();
    const u64 exponent = (q - 1) / (2 * n_);
    for (u64 g = 2; g < q; ++g) {
      const u64 psi = q_.pow(g, exponent);
      if (q_.pow(psi, n_) == q - 1) return psi;
    }
    throw std::runtime_error("no primitive 2n-th root of unity");
  }

  std::size_t n_;
  Modulus q_;
  u64 psi_ = 0;
  std::vector<ShoupConstant> fwd_;
  std::vector<ShoupConstant> inv_;
  ShoupConstant n_inv_;
};

}  // namespace sefl
