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

// Reference implementations used only by tests. Nothing here calls into the
// library's arithmetic paths.

#pragma once

#include <cstdint>
#include <vector>

namespace sefl::oracle {

// Negacyclic schoolbook product of two residue vectors mod q (< 2^62), with
// per-term reduction in 128-bit arithmetic.
inline std::vector<std::uint64_t> NegacyclicSchoolbook(const std::vector<std::uint64_t>& a,
                                                       const std::vector<std::uint64_t>& b,
                                                       std::uint64_t q) {
  const std::size_t n = a.size();
  using i128 = __int128;
  std::vector<i128> acc(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const i128 p = static_cast<i128>((static_cast<unsigned __int128>(a[i]) * b[j]) % q);
      if (i + j < n) {
        acc[i + j] += p;
      } else {
        acc[i + j - n] -= p;
      }
    }
  }
  std::vector<std::uint64_t> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    i128 v = acc[k] % static_cast<i128>(q);
    if (v < 0) v += q;
    out[k] = static_cast<std::uint64_t>(v);
  }
  return out;
}

// Faster variant for q < 2^50 and n <= 2^20: products are accumulated without
// reduction and reduced once per output coefficient.
inline std::vector<std::uint64_t> NegacyclicSchoolbookLazy(const std::vector<std::uint64_t>& a,
                                                           const std::vector<std::uint64_t>& b,
                                                           std::uint64_t q) {
  const std::size_t n = a.size();
  using u128 = unsigned __int128;
  std::vector<std::uint64_t> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    u128 pos = 0, neg = 0;
    for (std::size_t i = 0; i <= k; ++i) pos += static_cast<u128>(a[i]) * b[k - i];
    for (std::size_t i = k + 1; i < n; ++i) neg += static_cast<u128>(a[i]) * b[n + k - i];
    const std::uint64_t p = static_cast<std::uint64_t>(pos % q);
    const std::uint64_t m = static_cast<std::uint64_t>(neg % q);
    out[k] = p >= m ? p - m : p + q - m;
  }
  return out;
}

// Variant for q < 2^25 and n <= 2^13. Each product fits in 50 bits, so a
// column of n of them stays below 2^63 and reduction happens once at the end.
// The 32-bit operands let the compiler vectorize the widening multiply.
#if defined(__GNUC__) && defined(__x86_64__)
__attribute__((target_clones("avx2", "default")))
#endif
inline std::vector<std::uint64_t> NegacyclicSchoolbookNarrow(const std::vector<std::uint64_t>& a,
                                                             const std::vector<std::uint64_t>& b,
                                                             std::uint64_t q) {
  const std::size_t n = a.size();
  std::vector<std::uint32_t> b32(b.begin(), b.end());
  std::vector<std::uint64_t> pos(n, 0), neg(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t ai = a[i];
    std::uint64_t* p = pos.data() + i;
    const std::uint32_t* bp = b32.data();
    const std::size_t split = n - i;
    for (std::size_t j = 0; j < split; ++j) p[j] += ai * bp[j];
    std::uint64_t* m = neg.data();
    for (std::size_t j = split; j < n; ++j) m[j - split] += ai * bp[j];
  }
  std::vector<std::uint64_t> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t p = pos[k] % q, m = neg[k] % q;
    out[k] = p >= m ? p - m : p + q - m;
  }
  return out;
}

// Negacyclic product over the integers (no modulus), for small inputs.
inline std::vector<__int128> NegacyclicIntegers(const std::vector<std::int64_t>& a,
                                                const std::vector<std::int64_t>& b) {
  const std::size_t n = a.size();
  std::vector<__int128> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const __int128 p = static_cast<__int128>(a[i]) * b[j];
      if (i + j < n) {
        out[i + j] += p;
      } else {
        out[i + j - n] -= p;
      }
    }
  }
  return out;
}

// Negacyclic product in R_t of two residue vectors.
inline std::vector<std::uint64_t> MulInRt(const std::vector<std::uint64_t>& a,
                                          const std::vector<std::uint64_t>& b, std::uint64_t t) {
  return NegacyclicSchoolbook(a, b, t);
}

}  // namespace sefl::oracle
