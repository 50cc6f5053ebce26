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

#include <cstddef>

// Shared pieces of the lane-strided reduction contract (see kernels.hpp).
// Both the scalar and the AVX2 translation units include this so the tail
// handling and the collapse order cannot drift apart.

namespace mb::kern::detail {

inline constexpr size_t kLanes = 8;

// Fixed collapse order for the 8 lane accumulators. The grouping matches the
// natural AVX2 horizontal sum of two 4-lane vectors: lanes 0..3 hold elements
// i+0..i+3, lanes 4..7 hold i+4..i+7.
inline double collapse8(const double acc[kLanes]) {
  const double b0 = acc[0] + acc[4];
  const double b1 = acc[1] + acc[5];
  const double b2 = acc[2] + acc[6];
  const double b3 = acc[3] + acc[7];
  return (b0 + b2) + (b1 + b3);
}

inline void dot_tail(const float* x, const float* y, size_t base, size_t n,
                     double acc[kLanes]) {
  for (size_t j = 0; base + j < n; ++j) {
    acc[j] += static_cast<double>(x[base + j]) * static_cast<double>(y[base + j]);
  }
}

inline void sum_tail(const float* x, size_t base, size_t n, double acc[kLanes]) {
  for (size_t j = 0; base + j < n; ++j) {
    acc[j] += static_cast<double>(x[base + j]);
  }
}

}  // namespace mb::kern::detail
