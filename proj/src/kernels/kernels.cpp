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

#include "mb/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>

#include "lane_reduce.hpp"

namespace mb::kern {

namespace {

using detail::kLanes;

double dot_scalar(const float* x, const float* y, size_t n) {
  double acc[kLanes] = {};
  const size_t main = n - n % kLanes;
  for (size_t i = 0; i < main; i += kLanes) {
    for (size_t j = 0; j < kLanes; ++j) {
      acc[j] += static_cast<double>(x[i + j]) * static_cast<double>(y[i + j]);
    }
  }
  detail::dot_tail(x, y, main, n, acc);
  return detail::collapse8(acc);
}

double sum_scalar(const float* x, size_t n) {
  double acc[kLanes] = {};
  const size_t main = n - n % kLanes;
  for (size_t i = 0; i < main; i += kLanes) {
    for (size_t j = 0; j < kLanes; ++j) {
      acc[j] += static_cast<double>(x[i + j]);
    }
  }
  detail::sum_tail(x, main, n, acc);
  return detail::collapse8(acc);
}

float max_scalar(const float* x, size_t n) {
  float m = x[0];
  for (size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void add_scalar_k(const float* a, const float* b, float* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar_k(const float* a, const float* b, float* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar_k(const float* a, const float* b, float* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar_k(const float* a, float c, float* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void axpy_scalar_k(float a, const float* x, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

const Ops kScalarOps = {
    dot_scalar, sum_scalar, max_scalar, add_scalar_k,
    sub_scalar_k, mul_scalar_k, scale_scalar_k, axpy_scalar_k,
};

const Ops* g_active = nullptr;
const char* g_active_name = "scalar";
std::once_flag g_select_once;

void select_default() {
  const char* env = std::getenv("MB_KERNELS");
  std::string want = env ? env : "";
  if (want == "scalar") {
    g_active = &kScalarOps;
    g_active_name = "scalar";
    return;
  }
  if (want == "avx2") {
    const Ops* a = avx2_ops();
    if (!a) throw std::runtime_error("MB_KERNELS=avx2 but AVX2 is not available");
    g_active = a;
    g_active_name = "avx2";
    return;
  }
  if (!want.empty()) {
    throw std::runtime_error("MB_KERNELS: unknown backend '" + want + "'");
  }
  if (const Ops* a = avx2_ops()) {
    g_active = a;
    g_active_name = "avx2";
  } else {
    g_active = &kScalarOps;
    g_active_name = "scalar";
  }
}

}  // namespace

const Ops& scalar_ops() { return kScalarOps; }

#if !defined(MB_BUILD_AVX2)
const Ops* avx2_ops() { return nullptr; }
bool avx2_available() { return false; }
#endif

const Ops& active() {
  std::call_once(g_select_once, select_default);
  return *g_active;
}

const char* active_name() {
  active();
  return g_active_name;
}

void select(Backend b) {
  active();  // run default selection once so call_once is consumed
  switch (b) {
    case Backend::kScalar:
      g_active = &kScalarOps;
      g_active_name = "scalar";
      return;
    case Backend::kAvx2: {
      const Ops* a = avx2_ops();
      if (!a) throw std::runtime_error("AVX2 kernels not available on this host");
      g_active = a;
      g_active_name = "avx2";
      return;
    }
  }
  throw std::logic_error("unknown kernel backend");
}

}  // namespace mb::kern
