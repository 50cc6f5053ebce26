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
#include <string>

namespace mb::kern {

// Arithmetic inner loops, provided as scalar reference kernels plus an AVX2
// variant selected at runtime. Every kernel is specified to produce
// bit-identical results across variants:
//
//   * elementwise kernels perform the same IEEE-754 single ops per element;
//   * reductions (dot, sum) accumulate in double across 8 lane-strided
//     accumulators (element i goes to lane i mod 8, tails fill lanes 0..r-1)
//     and collapse them in the fixed order
//       ((a0+a4)+(a2+a6)) + ((a1+a5)+(a3+a7)).
//
// The equivalence test suite asserts exact equality between variants, and a
// training run therefore checkpoints identically no matter which variant the
// dispatcher picked.
struct Ops {
  // sum_i x[i]*y[i], accumulated in double.
  double (*dot)(const float* x, const float* y, size_t n);
  // sum_i x[i], accumulated in double.
  double (*sum)(const float* x, size_t n);
  // max_i x[i]; n must be >= 1 and the input finite.
  float (*max)(const float* x, size_t n);
  void (*add)(const float* a, const float* b, float* out, size_t n);
  void (*sub)(const float* a, const float* b, float* out, size_t n);
  void (*mul)(const float* a, const float* b, float* out, size_t n);
  // out[i] = a[i] * c
  void (*scale)(const float* a, float c, float* out, size_t n);
  // y[i] += a * x[i]
  void (*axpy)(float a, const float* x, float* y, size_t n);
};

enum class Backend { kScalar, kAvx2 };

// Active kernel set. First use selects the best supported backend, honoring
// the MB_KERNELS environment variable ("scalar" or "avx2").
const Ops& active();
const char* active_name();

// Force a backend (tests). Throws if the backend is not available.
void select(Backend b);
bool avx2_available();

const Ops& scalar_ops();
// Null when the binary was built without AVX2 support or the CPU lacks it.
const Ops* avx2_ops();

}  // namespace mb::kern
