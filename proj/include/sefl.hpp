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

#include "sefl/aggregate.hpp"
#include "sefl/bench.hpp"
#include "sefl/errors.hpp"
#include "sefl/flsim.hpp"
#include "sefl/he.hpp"
#include "sefl/modmath.hpp"
#include "sefl/ntt.hpp"
#include "sefl/packing.hpp"
#include "sefl/privacy.hpp"
#include "sefl/profiles.hpp"
#include "sefl/random.hpp"
#include "sefl/ring.hpp"
#include "sefl/sensitivity.hpp"
