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

#include <sodium.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <string_view>

namespace sefl {

namespace detail {

inline void ensure_sodium() {
  static const bool initialized = [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    return true;
  }();
  (void)initialized;
}

}  // namespace detail

using Seed = std::array<std::uint8_t, 32>;

// Deterministic ChaCha20 keystream generator. Every sampler in the library
// takes one of these by reference, so each caller (thread, client) owns its
// own stream and results are reproducible from the 32-byte key.
//
// Satisfies UniformRandomBitGenerator, so it also plugs into <random>
// distributions.
class Prng {
 public:
  using result_type = std::uint64_t;

  explicit Prng(const Seed& key) : key_(key) { detail::ensure_sodium(); }

  explicit Prng(std::uint64_t seed) : Prng(derive_key(seed)) {}

  static Prng from_os_entropy() {
    detail::ensure_sodium();
    Seed key;
    randombytes_buf(key.data(), key.size());
    return Prng(key);
  }

  static Seed derive_key(std::uint64_t seed) {
    detail::ensure_sodium();
    std::uint8_t in[8];
    for (int i = 0; i < 8; ++i) in[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    return hash_key(std::span<const std::uint8_t>(in, 8), "sefl.seed");
  }

  // Independent child stream for (label, index), stable across runs.
  Prng fork(std::string_view label, std::uint64_t index = 0) const {
    std::uint8_t in[32 + 8];
    std::memcpy(in, key_.data(), 32);
    for (int i = 0; i < 8; ++i) in[32 + i] = static_cast<std::uint8_t>(index >> (8 * i));
    return Prng(hash_key(std::span<const std::uint8_t>(in, sizeof in), label));
  }

  const Seed& key() const { return key_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ + 8 > buffer_.size()) refill();
    result_type v;
    std::memcpy(&v, buffer_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }

  // Uniform integer in [0, bound) without modulo bias.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_below(0)");
    const std::uint64_t limit = max() - (max() % bound);
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % bound;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Standard normal via the Marsaglia polar method.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // Laplace(0, scale) by inverse CDF.
  double laplace(double scale) {
    double u;
    do {
      u = uniform01();
    } while (u == 0.0);
    u -= 0.5;
    return -scale * std::copysign(1.0, u) * std::log(1.0 - 2.0 * std::fabs(u));
  }

 private:
  static Seed hash_key(std::span<const std::uint8_t> data, std::string_view label) {
    Seed out;
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, out.size());
    crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(label.data()),
                              label.size());
    crypto_generichash_update(&st, data.data(), data.size());
    crypto_generichash_final(&st, out.data(), out.size());
    return out;
  }

  void refill() {
    static constexpr std::uint8_t kNonce[crypto_stream_chacha20_NONCEBYTES] = {};
    std::memset(buffer_.data(), 0, buffer_.size());
    crypto_stream_chacha20_xor_ic(buffer_.data(), buffer_.data(), buffer_.size(), kNonce,
                                  block_counter_, key_.data());
    block_counter_ += buffer_.size() / 64;
    pos_ = 0;
  }

  Seed key_;
  std::array<std::uint8_t, 4096> buffer_{};
  std::size_t pos_ = 4096;
  std::uint64_t block_counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// 32-byte BLAKE2b digest.
inline Seed digest(std::span<const std::uint8_t> data) {
  detail::ensure_sodium();
  Seed out;
  crypto_generichash(out.data(), out.size(), data.data(), data.size(), nullptr, 0);
  return out;
}

}  // namespace sefl
