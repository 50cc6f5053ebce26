// Copyright 2026 The modbridge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mb/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mb {
namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

uint64_t splitmix64(uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t RngState::next_u64() {
  ++counter_;
  return splitmix64(seed_ + kGolden * counter_);
}

double RngState::next_real() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t RngState::uniform_below(uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be >= 1");
  if (n == 1) return 0;
  // Rejection keeps the distribution exact for any n.
  const uint64_t threshold = (0 - n) % n;
  for (;;) {
    const uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double RngState::normal() {
  // u1 in (0, 1] so the log is finite. No second-sample caching: each call
  // consumes exactly two uniforms, which keeps the counter advance
  // predictable regardless of call interleaving.
  const double u1 = 1.0 - next_real();
  const double u2 = next_real();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * M_PI * u2);
}

RngState RngState::fork(uint64_t tag) const {
  return RngState(splitmix64(seed_ ^ splitmix64(tag + kGolden)));
}

uint64_t mix64(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b + kGolden));
}

}  // namespace mb
