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

#include "sefl/modmath.hpp"

#include <gtest/gtest.h>

#include "sefl/ntt.hpp"
#include "sefl/random.hpp"

namespace sefl {
namespace {

bool IsPrimeByTrialDivision(u64 n) {
  if (n < 2) return false;
  for (u64 d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

TEST(ModulusTest, BarrettMatchesHardwareRemainder) {
  Prng rng(7);
  for (u64 q : {u64{3}, u64{17}, u64{65537}, (u64{1} << 61) - 1, (u64{1} << 62) - 57}) {
    Modulus m(q);
    for (int i = 0; i < 20000; ++i) {
      const u128 z = (u128{rng()} << 64) | rng();
      ASSERT_EQ(m.reduce128(z), static_cast<u64>(z % q)) << "q=" << q;
      const u64 a = rng() % q, b = rng() % q;
      ASSERT_EQ(m.mul(a, b), static_cast<u64>((u128{a} * b) % q));
    }
  }
}

TEST(ModulusTest, RejectsOutOfRangeValues) {
  EXPECT_THROW(Modulus(1), std::invalid_argument);
  EXPECT_THROW(Modulus(u64{1} << 62), std::invalid_argument);
}

TEST(ModulusTest, SignedLiftAndInverse) {
  Modulus m(17);
  EXPECT_EQ(m.from_signed(-1), 16u);
  EXPECT_EQ(m.from_signed(-18), 16u);
  const __int128 min_mod = (static_cast<__int128>(INT64_MIN) % 17 + 17) % 17;
  EXPECT_EQ(m.from_signed(INT64_MIN), static_cast<u64>(min_mod));
  for (u64 a = 1; a < 17; ++a) EXPECT_EQ(m.mul(a, m.inv(a)), 1u);
}

TEST(ShoupTest, MatchesDirectProduct) {
  Prng rng(3);
  const u64 q = (u64{1} << 60) - 93;
  for (int i = 0; i < 10000; ++i) {
    const u64 w = rng() % q, x = rng() % q;
    ShoupConstant c(w, q);
    ASSERT_EQ(c.mul(x, q), static_cast<u64>((u128{w} * x) % q));
  }
}

TEST(PrimalityTest, AgreesWithTrialDivision) {
  for (u64 n = 0; n < 20000; ++n) ASSERT_EQ(is_prime(n), IsPrimeByTrialDivision(n)) << n;
  Prng rng(11);
  for (int i = 0; i < 200; ++i) {
    const u64 n = (rng() % (u64{1} << 36)) | 1;
    ASSERT_EQ(is_prime(n), IsPrimeByTrialDivision(n)) << n;
  }
  EXPECT_TRUE(is_prime((u64{1} << 61) - 1));
  EXPECT_FALSE(is_prime(3215031751ULL));  // strong pseudoprime to bases 2,3,5,7
}

TEST(PrimalityTest, NttPrimesAreCongruentAndDescending) {
  auto primes = ntt_primes(54, 4096, 3);
  ASSERT_EQ(primes.size(), 3u);
  for (std::size_t i = 0; i < primes.size(); ++i) {
    EXPECT_EQ(primes[i] % 8192, 1u);
    EXPECT_LT(primes[i], u64{1} << 54);
    EXPECT_TRUE(is_prime(primes[i]));
    if (i > 0) {
      EXPECT_LT(primes[i], primes[i - 1]);
    }
  }
}

TEST(PrimalityTest, BatchingPlaintextModulusAt8192) {
  const u64 t = smallest_ntt_prime_at_least(u64{1} << 19, 8192);
  // Independent scan: first k with 1 + 16384k >= 2^19 that is prime.
  u64 expected = 0;
  for (u64 k = 1;; ++k) {
    const u64 c = 1 + 16384 * k;
    if (c >= (u64{1} << 19) && IsPrimeByTrialDivision(c)) {
      expected = c;
      break;
    }
  }
  EXPECT_EQ(t, expected);
  EXPECT_EQ(t, 557057u);  // 1 + 34 * 16384
}

TEST(NttTest, RoundTripIsIdentity) {
  Prng rng(5);
  for (std::size_t n : {4u, 8u, 64u, 1024u}) {
    const u64 q = ntt_primes(50, n, 1)[0];
    NttTables tables(n, Modulus(q));
    std::vector<u64> a(n);
    for (auto& x : a) x = rng() % q;
    auto b = a;
    tables.forward(b);
    tables.inverse(b);
    EXPECT_EQ(a, b) << "n=" << n;
  }
}

TEST(NttTest, RejectsUnfriendlyModulus) {
  EXPECT_THROW(NttTables(8, Modulus(19)), std::invalid_argument);
  EXPECT_FALSE(NttTables::supports(8, 19));
  EXPECT_TRUE(NttTables::supports(8, 17));
}

}  // namespace
}  // namespace sefl
