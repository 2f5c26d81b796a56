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

#include <string>
#include <string_view>
#include <vector>

#include "sefl/errors.hpp"
#include "sefl/modmath.hpp"
#include "sefl/ring.hpp"

namespace sefl {

// Named ring parameter sets.
//
//   toy1024        n=1024, one 50-bit limb, t=2^24            toy, insecure
//   toy2048        n=2048, one 60-bit limb, t=2^30            toy, insecure
//   desk4096       n=4096, two 54-bit limbs (108 bits), t=2^30
//   std8192      n=8192, four 54-bit limbs (216 bits), t = smallest
//                  prime = 1 mod 16384 above 2^19 (slot batching works)
//   std8192-pow2 as std8192 with t=2^20 (coefficient packing only)
//
// The 8192 sets stay under the 218-bit total modulus commonly cited for
// 128-bit security at that degree.
struct RingProfile {
  std::string name;
  RingParams params;
  bool insecure = false;
};

inline std::vector<std::string> profile_names() {
  return {"toy1024", "toy2048", "desk4096", "std8192", "std8192-pow2"};
}

inline RingProfile ring_profile(std::string_view name) {
  RingProfile p;
  p.name = std::string(name);
  if (name == "toy1024") {
    p.params = RingParams{1024, ntt_primes(50, 1024, 1), u64{1} << 24, 3.2};
    p.insecure = true;
  } else if (name == "toy2048") {
    p.params = RingParams{2048, ntt_primes(60, 2048, 1), u64{1} << 30, 3.2};
    p.insecure = true;
  } else if (name == "desk4096") {
    p.params = RingParams{4096, ntt_primes(54, 4096, 2), u64{1} << 30, 3.2};
  } else if (name == "std8192") {
    p.params = RingParams{8192, ntt_primes(54, 8192, 4),
                          smallest_ntt_prime_at_least(u64{1} << 19, 8192), 3.2};
  } else if (name == "std8192-pow2") {
    p.params = RingParams{8192, ntt_primes(54, 8192, 4), u64{1} << 20, 3.2};
  } else {
    throw ConfigError("unknown ring profile '" + std::string(name) + "'");
  }
  return p;
}

inline RingContextPtr make_context(std::string_view profile) {
  return RingContext::create(ring_profile(profile).params);
}

}  // namespace sefl
