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
#include <vector>

#include "doctest.h"
#include "mb/gradcheck.hpp"
#include "mb/ops.hpp"
#include "mb/rng.hpp"
#include "mb/tape.hpp"

namespace {

mb::Tensor random_tensor(mb::Shape s, uint64_t seed, double scale = 0.5) {
  mb::RngState rng(seed);
  mb::Tensor t(s);
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * scale);
  return t;
}

constexpr double kTol = 1e-3;
constexpr double kEps = 1e-3;

}  // namespace

TEST_CASE("forward values of the basic ops") {
  mb::Tape<float> tape;
  const int a = tape.constant(mb::tensor_from(mb::Shape{2, 2}, {1, 2, 3, 4}));
  const int b = tape.constant(mb::tensor_from(mb::Shape{2, 2}, {5, 6, 7, 8}));

  const int s = mb::add(tape, a, b);
  CHECK(tape.val(s).data == std::vector<float>({6, 8, 10, 12}));

  const int d = mb::sub(tape, b, a);
  CHECK(tape.val(d).data == std::vector<float>({4, 4, 4, 4}));

  const int h = mb::hadamard(tape, a, b);
  CHECK(tape.val(h).data == std::vector<float>({5, 12, 21, 32}));

  const int m = mb::matmul(tape, a, b);
  CHECK(tape.val(m).data == std::vector<float>({19, 22, 43, 50}));

  const int mt = mb::matmul_nt(tape, a, b);
  // A * B^T: row0 = (1*5+2*6, 1*7+2*8) = (17, 23)
  CHECK(tape.val(mt).data == std::vector<float>({17, 23, 39, 53}));

  const int tr = mb::transpose(tape, a);
  CHECK(tape.val(tr).data == std::vector<float>({1, 3, 2, 4}));

  const int sc = mb::scale(tape, a, 2.0);
  CHECK(tape.val(sc).data == std::vector<float>({2, 4, 6, 8}));
}

TEST_CASE("softmax rows, causal masking, cross entropy identities") {
  mb::Tape<float> tape;
  const int logits = tape.constant(mb::Tensor(mb::Shape{3, 5}));  // all zero
  const int p = mb::softmax_rows(tape, logits, false);
  for (float v : tape.val(p).data) CHECK(v == doctest::Approx(0.2));

  // Uniform logits: CE = ln V to within 1e-4 (acceptance identity).
  const int ce = mb::cross_entropy_rows(tape, logits, {1, 4, 2}, {1, 1, 1});
  CHECK(tape.val(ce).scalar() == doctest::Approx(std::log(5.0)).epsilon(1e-4));

  // Causal: row t of a square input distributes mass over columns 0..t.
  mb::Tape<float> t2;
  const int sq = t2.constant(random_tensor(mb::Shape{4, 4}, 99));
  const int cp = mb::softmax_rows(t2, sq, true);
  const auto& val = t2.val(cp);
  CHECK(val.at(0, 1) == 0.0f);
  CHECK(val.at(0, 0) == doctest::Approx(1.0));
  CHECK(val.at(2, 3) == 0.0f);
  double row2 = 0.0;
  for (int c = 0; c <= 2; ++c) row2 += val.at(2, c);
  CHECK(row2 == doctest::Approx(1.0));
}

TEST_CASE("cross entropy respects the mask and rejects empty support") {
  mb::Tensor l = random_tensor(mb::Shape{3, 4}, 7);
  mb::Tape<float> tape;
  const int logits = tape.constant(l);
  const int full = mb::cross_entropy_rows(tape, logits, {0, 1, 2}, {1, 1, 1});
  const int only1 = mb::cross_entropy_rows(tape, logits, {0, 1, 2}, {0, 1, 0});

  // Masked mean equals the plain helper on the same rows.
  CHECK(tape.val(only1).scalar() ==
        doctest::Approx(mb::cross_entropy(l, {0, 1, 2}, {0, 1, 0})));
  CHECK(tape.val(full).scalar() == doctest::Approx(mb::cross_entropy(l, {0, 1, 2}, {1, 1, 1})));
  CHECK_THROWS_WITH_AS(mb::cross_entropy_rows(tape, logits, {0, 1, 2}, {0, 0, 0}),
                       doctest::Contains("empty loss support"), std::invalid_argument);
}

TEST_CASE("gradients stop at constants and flow to trainables") {
  mb::Parameter w("w", mb::tensor_from(mb::Shape{2, 2}, {1, 0, 0, 1}));
  mb::Tape<float> tape;
  const int wi = tape.trainable(w);
  const int x = tape.constant(mb::tensor_from(mb::Shape{2, 2}, {1, 2, 3, 4}));
  const int y = mb::matmul(tape, x, wi);
  const int target = tape.constant(mb::Tensor(mb::Shape{2, 2}));
  const int loss = mb::mean_squared_error(tape, y, target);
  tape.backward(loss);
  tape.apply_param_grads();
  CHECK(!tape.needs(x));
  double gsum = 0.0;
  for (float g : w.grad.data) gsum += std::abs(g);
  CHECK(gsum > 0.0);
}

// Each case builds loss(params) once per tape type; gradient_check replays
// it on the double tape with per-element overrides.
TEST_CASE("gradcheck: affine + gelu + layer norm chain") {
  mb::Parameter w("w", random_tensor(mb::Shape{3, 4}, 11, 0.4));
  mb::Parameter b("b", random_tensor(mb::Shape{4}, 12, 0.2));
  mb::Parameter g("g", random_tensor(mb::Shape{4}, 13, 0.1));
  mb::Parameter h("h", random_tensor(mb::Shape{4}, 14, 0.1));
  for (auto& v : g.value.data) v += 1.0f;
  const mb::Tensor x = random_tensor(mb::Shape{5, 3}, 15);
  const mb::Tensor target = random_tensor(mb::Shape{5, 4}, 16);
  const mb::ParamRefs params = {&w, &b, &g, &h};

  auto build = [&](auto& tape) {
    const int xi = tape.constant32(x);
    const int wi = tape.trainable(w);
    const int bi = tape.trainable(b);
    const int lin = mb::add_row_broadcast(tape, mb::matmul(tape, xi, wi), bi);
    const int act = mb::gelu(tape, lin);
    const int normed = mb::layer_norm(tape, act, tape.trainable(g), tape.trainable(h), 1e-5);
    return mb::mean_squared_error(tape, normed, tape.constant32(target));
  };
  const auto report = mb::gradient_check(build, params, kEps);
  CHECK(report.max_rel_err < kTol);
}

TEST_CASE("gradcheck: softmax attention pattern") {
  mb::Parameter q("q", random_tensor(mb::Shape{4, 4}, 21, 0.4));
  mb::Parameter k("k", random_tensor(mb::Shape{4, 4}, 22, 0.4));
  mb::Parameter v("v", random_tensor(mb::Shape{4, 4}, 23, 0.4));
  const mb::Tensor x = random_tensor(mb::Shape{4, 4}, 24);
  const mb::Tensor target = random_tensor(mb::Shape{4, 4}, 25);
  const mb::ParamRefs params = {&q, &k, &v};

  auto build = [&](auto& tape) {
    const int xi = tape.constant32(x);
    const int qs = mb::matmul(tape, xi, tape.trainable(q));
    const int ks = mb::matmul(tape, xi, tape.trainable(k));
    const int vs = mb::matmul(tape, xi, tape.trainable(v));
    const int scores = mb::scale(tape, mb::matmul_nt(tape, qs, ks), 0.5);
    const int attn = mb::softmax_rows(tape, scores, true);
    const int out = mb::matmul(tape, attn, vs);
    return mb::mean_squared_error(tape, out, tape.constant32(target));
  };
  const auto report = mb::gradient_check(build, params, kEps);
  CHECK(report.max_rel_err < kTol);
}

TEST_CASE("gradcheck: embedding gather, mean pool, unit normalize") {
  mb::Parameter table("table", random_tensor(mb::Shape{6, 5}, 31, 0.5));
  const std::vector<int> ids = {4, 1, 1, 3};
  const mb::Tensor target = random_tensor(mb::Shape{5}, 32);
  const mb::ParamRefs params = {&table};

  auto build = [&](auto& tape) {
    const int rows = mb::embed_rows(tape, tape.trainable(table), ids);
    const int pooled = mb::mean_rows(tape, rows);
    const int unit = mb::unit_normalize(tape, pooled);
    return mb::mean_squared_error(tape, unit, tape.constant32(target));
  };
  const auto report = mb::gradient_check(build, params, kEps);
  CHECK(report.max_rel_err < kTol);
}

TEST_CASE("gradcheck: slices, concats, stacked rows, tanh") {
  mb::Parameter a("a", random_tensor(mb::Shape{4, 6}, 41, 0.5));
  const mb::Tensor target = random_tensor(mb::Shape{2, 6}, 42);
  const mb::ParamRefs params = {&a};

  auto build = [&](auto& tape) {
    const int ai = tape.trainable(a);
    const int top = mb::slice_rows(tape, ai, 0, 2);
    const int bottom = mb::slice_rows(tape, ai, 2, 4);
    const int left = mb::slice_cols(tape, bottom, 0, 3);
    const int right = mb::slice_cols(tape, bottom, 3, 6);
    const int re = mb::concat_cols(tape, {right, left});
    const int mixed = mb::add(tape, top, mb::tanh_act(tape, re));
    return mb::mean_squared_error(tape, mixed, tape.constant32(target));
  };
  const auto report = mb::gradient_check(build, params, kEps);
  CHECK(report.max_rel_err < kTol);
}

TEST_CASE("gradcheck: temperature-scaled cross entropy, exp of a scalar") {
  mb::Parameter logt("logt", mb::tensor_scalar(0.3f));
  mb::Parameter emb("emb", random_tensor(mb::Shape{3, 4}, 51, 0.6));
  const mb::Tensor keys = random_tensor(mb::Shape{3, 4}, 52, 0.6);
  const mb::ParamRefs params = {&logt, &emb};

  auto build = [&](auto& tape) {
    const int e = tape.trainable(emb);
    const int scores = mb::matmul_nt(tape, e, tape.constant32(keys));
    const int scaled = mb::scale_by(tape, scores, mb::exp_scalar(tape, tape.trainable(logt)));
    return mb::cross_entropy_rows(tape, scaled, {0, 1, 2}, {1, 1, 1});
  };
  const auto report = mb::gradient_check(build, params, kEps);
  CHECK(report.max_rel_err < kTol);
}

TEST_CASE("gradcheck: reshape and row broadcast") {
  mb::Parameter a("a", random_tensor(mb::Shape{6}, 61, 0.5));
  mb::Parameter b("b", random_tensor(mb::Shape{3}, 62, 0.5));
  const mb::Tensor target = random_tensor(mb::Shape{2, 3}, 63);
  const mb::ParamRefs params = {&a, &b};

  auto build = [&](auto& tape) {
    const int mat = mb::reshape(tape, tape.trainable(a), mb::Shape{2, 3});
    const int out = mb::add_row_broadcast(tape, mat, tape.trainable(b));
    return mb::mean_squared_error(tape, out, tape.constant32(target));
  };
  const auto report = mb::gradient_check(build, params, kEps);
  CHECK(report.max_rel_err < kTol);
}

TEST_CASE("gradcheck: sum of per-example scalar losses") {
  mb::Parameter w("w", random_tensor(mb::Shape{2, 3}, 71, 0.5));
  const mb::Tensor x1 = random_tensor(mb::Shape{1, 2}, 72);
  const mb::Tensor x2 = random_tensor(mb::Shape{1, 2}, 73);
  const mb::Tensor t1 = random_tensor(mb::Shape{1, 3}, 74);
  const mb::Tensor t2 = random_tensor(mb::Shape{1, 3}, 75);
  const mb::ParamRefs params = {&w};

  auto build = [&](auto& tape) {
    const int wi = tape.trainable(w);
    const int l1 = mb::mean_squared_error(tape, mb::matmul(tape, tape.constant32(x1), wi),
                                          tape.constant32(t1));
    const int l2 = mb::mean_squared_error(tape, mb::matmul(tape, tape.constant32(x2), wi),
                                          tape.constant32(t2));
    return mb::scale(tape, mb::sum_scalars(tape, {l1, l2}), 0.5);
  };
  const auto report = mb::gradient_check(build, params, kEps);
  CHECK(report.max_rel_err < kTol);
}

TEST_CASE("double-tape override replaces a parameter's forward value") {
  mb::Parameter w("w", mb::tensor_from(mb::Shape{2}, {1.0f, 2.0f}));
  mb::Tape<double> tape;
  mb::Tens<double> replaced(mb::Shape{2});
  replaced.data = {5.0, 6.0};
  tape.set_override(&w, replaced);
  const int wi = tape.trainable(w);
  CHECK(tape.val(wi).data[0] == 5.0);
  CHECK(tape.val(wi).data[1] == 6.0);
}

TEST_CASE("backward demands a scalar loss") {
  mb::Tape<float> tape;
  const int a = tape.constant(mb::tensor_from(mb::Shape{2}, {1.0f, 2.0f}));
  CHECK_THROWS(tape.backward(a));
}
