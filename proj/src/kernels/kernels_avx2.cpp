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

// AVX2 kernel variant. Reductions follow the lane-strided contract in
// kernels.hpp: 8 double accumulators, element i in lane i mod 8, collapsed
// via collapse8. Multiplies and adds stay separate (no FMA) so the scalar
// reference produces the same bits.

#include "mb/kernels.hpp"

#if defined(MB_BUILD_AVX2)

#include <immintrin.h>

#include "lane_reduce.hpp"

namespace mb::kern {

namespace {

using detail::kLanes;

double dot_avx2(const float* x, const float* y, size_t n) {
  __m256d acc_lo = _mm256_setzero_pd();  // lanes 0..3
  __m256d acc_hi = _mm256_setzero_pd();  // lanes 4..7
  const size_t main = n - n % kLanes;
  for (size_t i = 0; i < main; i += kLanes) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 vy = _mm256_loadu_ps(y + i);
    const __m256d xlo = _mm256_cvtps_pd(_mm256_castps256_ps128(vx));
    const __m256d ylo = _mm256_cvtps_pd(_mm256_castps256_ps128(vy));
    const __m256d xhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1));
    const __m256d yhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1));
    acc_lo = _mm256_add_pd(acc_lo, _mm256_mul_pd(xlo, ylo));
    acc_hi = _mm256_add_pd(acc_hi, _mm256_mul_pd(xhi, yhi));
  }
  alignas(32) double acc[kLanes];
  _mm256_store_pd(acc, acc_lo);
  _mm256_store_pd(acc + 4, acc_hi);
  detail::dot_tail(x, y, main, n, acc);
  return detail::collapse8(acc);
}

double sum_avx2(const float* x, size_t n) {
  __m256d acc_lo = _mm256_setzero_pd();
  __m256d acc_hi = _mm256_setzero_pd();
  const size_t main = n - n % kLanes;
  for (size_t i = 0; i < main; i += kLanes) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    acc_lo = _mm256_add_pd(acc_lo, _mm256_cvtps_pd(_mm256_castps256_ps128(vx)));
    acc_hi = _mm256_add_pd(acc_hi, _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)));
  }
  alignas(32) double acc[kLanes];
  _mm256_store_pd(acc, acc_lo);
  _mm256_store_pd(acc + 4, acc_hi);
  detail::sum_tail(x, main, n, acc);
  return detail::collapse8(acc);
}

float max_avx2(const float* x, size_t n) {
  // max of finite floats is order-independent, so the reduction shape is free.
  size_t i = 0;
  float m = x[0];
  if (n >= 8) {
    __m256 vm = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8) {
      vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
    }
    __m128 lo = _mm256_castps256_ps128(vm);
    __m128 hi = _mm256_extractf128_ps(vm, 1);
    __m128 m4 = _mm_max_ps(lo, hi);
    m4 = _mm_max_ps(m4, _mm_movehl_ps(m4, m4));
    m4 = _mm_max_ss(m4, _mm_shuffle_ps(m4, m4, 1));
    m = _mm_cvtss_f32(m4);
  }
  for (; i < n; ++i) m = m < x[i] ? x[i] : m;
  return m;
}

void add_avx2(const float* a, const float* b, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const float* a, const float* b, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const float* a, const float* b, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const float* a, float c, float* out, size_t n) {
  const __m256 vc = _mm256_set1_ps(c);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), vc));
  }
  for (; i < n; ++i) out[i] = a[i] * c;
}

void axpy_avx2(float a, const float* x, float* y, size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

const Ops kAvx2Ops = {
    dot_avx2, sum_avx2, max_avx2, add_avx2,
    sub_avx2, mul_avx2, scale_avx2, axpy_avx2,
};

}  // namespace

bool avx2_available() { return __builtin_cpu_supports("avx2"); }

const Ops* avx2_ops() { return avx2_available() ? &kAvx2Ops : nullptr; }

}  // namespace mb::kern

#endif  // MB_BUILD_AVX2
