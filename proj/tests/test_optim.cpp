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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "mb/ops.hpp"
#include "mb/rng.hpp"
#include "mb/tensor.hpp"

namespace {

// Reference Adam in pure double, kept separate from the production code.
struct RefAdam {
  std::vector<double> m, v;
  int64_t t = 0;

  explicit RefAdam(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& x, const std::vector<double>& g, double lr, double b1,
            double b2, double eps) {
    t += 1;
    for (size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(b1, static_cast<double>(t)));
      const double vhat = v[i] / (1.0 - std::pow(b2, static_cast<double>(t)));
      x[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

}  // namespace

TEST_CASE("first Adam step moves every element by exactly lr in the descent direction") {
  // With zero state, mhat = g and vhat = g*g, so the update is
  // lr * g / (|g| + eps) = lr * sign(g) up to eps rounding.
  mb::Parameter p("p", mb::tensor_from(mb::Shape{4}, {0.5f, -1.25f, 3.0f, -0.01f}));
  p.grad = mb::tensor_from(mb::Shape{4}, {0.1f, -2.0f, 0.004f, 7.0f});
  mb::adam_step({&p}, 1e-3);
  const float expected[] = {0.5f - 1e-3f, -1.25f + 1e-3f, 3.0f - 1e-3f, -0.01f - 1e-3f};
  for (size_t i = 0; i < 4; ++i) {
    CHECK(p.value.data[i] == doctest::Approx(expected[i]).epsilon(1e-4));
  }
  CHECK(p.step_count == 1);
}

TEST_CASE("multi-step Adam tracks a double-precision reference") {
  const size_t n = 16;
  mb::RngState rng(404);
  mb::Parameter p("p", mb::Tensor(mb::Shape{static_cast<int64_t>(n)}));
  std::vector<double> ref(n);
  for (size_t i = 0; i < n; ++i) {
    p.value.data[i] = static_cast<float>(rng.normal());
    ref[i] = p.value.data[i];
  }
  RefAdam oracle(n);

  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 0; step < 25; ++step) {
    std::vector<double> g(n);
    for (size_t i = 0; i < n; ++i) {
      g[i] = rng.normal();
      p.grad.data[i] = static_cast<float>(g[i]);
      g[i] = p.grad.data[i];  // match the float quantization of the input
    }
    mb::adam_step({&p}, lr, b1, b2, eps);
    oracle.step(ref, g, lr, b1, b2, eps);
  }
  for (size_t i = 0; i < n; ++i) {
    // State is stored in float between steps, so allow float-level drift.
    CHECK(p.value.data[i] == doctest::Approx(ref[i]).epsilon(2e-4));
  }
  CHECK(p.step_count == 25);
}

TEST_CASE("Adam refuses non-finite gradients and leaves state untouched") {
  mb::Parameter p("theta", mb::tensor_from(mb::Shape{2}, {1.0f, 2.0f}));
  p.grad.data = {1.0f, std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS_WITH_AS(mb::adam_step({&p}, 1e-3), doctest::Contains("theta"),
                       std::runtime_error);
  CHECK(p.value.data[0] == 1.0f);
  CHECK(p.step_count == 0);
}

TEST_CASE("zero_grad clears accumulated gradients") {
  mb::Parameter a("a", mb::tensor_from(mb::Shape{2}, {1.0f, 2.0f}));
  mb::Parameter b("b", mb::tensor_from(mb::Shape{2}, {3.0f, 4.0f}));
  a.grad.data = {5.0f, 6.0f};
  b.grad.data = {7.0f, 8.0f};
  mb::zero_grad({&a, &b});
  CHECK(a.grad.data == std::vector<float>({0.0f, 0.0f}));
  CHECK(b.grad.data == std::vector<float>({0.0f, 0.0f}));
}

TEST_CASE("learning rate ramps linearly then decays linearly to zero") {
  const double base = 4e-4;
  CHECK(mb::lr_at(0, base, 10, 100) == 0.0);
  CHECK(mb::lr_at(5, base, 10, 100) == doctest::Approx(base * 0.5));
  CHECK(mb::lr_at(10, base, 10, 100) == doctest::Approx(base));
  CHECK(mb::lr_at(55, base, 10, 100) == doctest::Approx(base * 0.5));
  CHECK(mb::lr_at(100, base, 10, 100) == doctest::Approx(0.0));
  // No warmup: full rate at step 0.
  CHECK(mb::lr_at(0, base, 0, 50) == doctest::Approx(base));
  // Monotone up then down.
  double prev = -1.0;
  for (int64_t s = 0; s <= 10; ++s) {
    const double lr = mb::lr_at(s, base, 10, 100);
    CHECK(lr >= prev);
    prev = lr;
  }
  for (int64_t s = 10; s <= 100; ++s) {
    const double lr = mb::lr_at(s, base, 10, 100);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("learning rate schedule rejects bad arguments") {
  CHECK_THROWS_AS(mb::lr_at(0, 1e-3, 100, 100), std::invalid_argument);
  CHECK_THROWS_AS(mb::lr_at(-1, 1e-3, 10, 100), std::invalid_argument);
  CHECK_THROWS_AS(mb::lr_at(101, 1e-3, 10, 100), std::invalid_argument);
}
