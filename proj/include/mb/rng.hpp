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

#pragma once

#include <cstdint>
#include <vector>

namespace mb {

// Counter-based deterministic generator: the draw sequence is a pure
// function of the 64-bit seed, with no platform entropy anywhere. State is
// (seed, counter); draw n is splitmix64 applied to seed + n*golden.
class RngState {
 public:
  explicit RngState(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

  uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double next_real();

  // Uniform integer in [0, n). n must be >= 1.
  uint64_t uniform_below(uint64_t n);

  // Standard normal via Box-Muller (two uniform draws per sample).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent stream derived from (seed, tag); unaffected by and not
  // affecting this stream's counter.
  RngState fork(uint64_t tag) const;

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
};

// Draws from several distinct seeds land in distinct streams; used to key
// per-scene / per-example streams.
uint64_t mix64(uint64_t a, uint64_t b);

}  // namespace mb
