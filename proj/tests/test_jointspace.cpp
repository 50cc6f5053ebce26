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
#include "mb/jointspace.hpp"
#include "mb/ops.hpp"
#include "mb/rng.hpp"

namespace {

mb::EncoderConfig tiny_config() {
  mb::EncoderConfig cfg;
  cfg.vocab_size = 12;
  cfg.token_dim = 8;
  cfg.embed_dim = 8;
  cfg.audio_dim = 6;
  cfg.hidden_dim = 10;
  return cfg;
}

std::vector<mb::ContrastivePair> tiny_pairs(const mb::EncoderConfig& cfg, size_t n,
                                            uint64_t seed) {
  mb::RngState rng(seed);
  std::vector<mb::ContrastivePair> pairs;
  for (size_t i = 0; i < n; ++i) {
    mb::ContrastivePair p;
    p.features = mb::Tensor(mb::Shape{cfg.audio_dim});
    for (auto& v : p.features.data) v = static_cast<float>(rng.normal());
    const size_t len = 2 + rng.uniform_below(3);
    for (size_t t = 0; t < len; ++t) {
      p.tokens.push_back(static_cast<int>(rng.uniform_below(
          static_cast<uint64_t>(cfg.vocab_size))));
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// Loss of a batch whose audio and text embeddings are all the same unit
// vector: every similarity is equal, so both softmax directions are uniform.
double all_equal_loss(size_t n, double log_temp) {
  mb::Tape<float> tape;
  mb::Tensor e(mb::Shape{4});
  e.data = {0.5f, 0.5f, 0.5f, 0.5f};
  std::vector<int> audio, text;
  for (size_t i = 0; i < n; ++i) {
    audio.push_back(tape.constant(e));
    text.push_back(tape.constant(e));
  }
  const int lt = tape.constant(mb::tensor_scalar(static_cast<float>(log_temp)));
  return tape.val(mb::contrastive_loss_node(tape, audio, text, lt)).scalar();
}

}  // namespace

TEST_CASE("all-equal similarities give exactly ln N at any temperature") {
  for (size_t n : {2u, 4u, 8u}) {
    CHECK(all_equal_loss(n, 0.0) == doctest::Approx(std::log((double)n)).epsilon(1e-4));
    CHECK(all_equal_loss(n, 0.77) == doctest::Approx(std::log((double)n)).epsilon(1e-4));
  }
}

TEST_CASE("orthonormal matched pairs score far below chance at high temperature") {
  mb::Tape<float> tape;
  const size_t n = 4;
  std::vector<int> audio, text;
  for (size_t i = 0; i < n; ++i) {
    mb::Tensor e(mb::Shape{4});
    e.data[i] = 1.0f;
    audio.push_back(tape.constant(e));
    text.push_back(tape.constant(e));
  }
  const int lt = tape.constant(mb::tensor_scalar(std::log(14.3f)));
  const double loss = tape.val(mb::contrastive_loss_node(tape, audio, text, lt)).scalar();
  CHECK(loss < 0.01);
  CHECK(loss >= 0.0);
}

TEST_CASE("mismatched pair counts are rejected") {
  mb::Tape<float> tape;
  mb::Tensor e(mb::Shape{2});
  e.data = {1.0f, 0.0f};
  const int a = tape.constant(e);
  const int lt = tape.constant(mb::tensor_scalar(0.0f));
  CHECK_THROWS_AS(mb::contrastive_loss_node(tape, {a, a}, {a}, lt), std::invalid_argument);
  CHECK_THROWS_AS(mb::contrastive_loss_node(tape, {a}, {a}, lt), std::invalid_argument);
}

TEST_CASE("contrastive loss gradients match finite differences") {
  const auto cfg = tiny_config();
  mb::DualEncoder enc(cfg, 31);
  const auto pairs = tiny_pairs(cfg, 3, 77);

  auto build = [&](auto& tape) {
    std::vector<int> audio, text;
    for (const auto& p : pairs) {
      audio.push_back(mb::encode_audio_node(tape, enc, p.features, true));
      text.push_back(mb::encode_text_node(tape, enc, p.tokens, true));
    }
    return mb::contrastive_loss_node(tape, audio, text, tape.trainable(enc.log_temperature));
  };
  const auto report = mb::gradient_check(build, enc.parameters(), 1e-3);
  CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("encoders emit unit-norm embeddings deterministically") {
  const auto cfg = tiny_config();
  mb::DualEncoder enc(cfg, 31);
  const auto pairs = tiny_pairs(cfg, 2, 99);

  const auto et = mb::encode_text(enc, pairs[0].tokens);
  const auto ea = mb::encode_audio(enc, pairs[0].features);
  CHECK(et.shape == mb::Shape{cfg.embed_dim});
  CHECK(ea.shape == mb::Shape{cfg.embed_dim});
  double nt = 0.0, na = 0.0;
  for (float v : et.data) nt += static_cast<double>(v) * v;
  for (float v : ea.data) na += static_cast<double>(v) * v;
  CHECK(nt == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(na == doctest::Approx(1.0).epsilon(1e-5));

  CHECK(mb::encode_text(enc, pairs[0].tokens).data == et.data);

  // Same seed rebuilds the same encoder; a different seed does not.
  mb::DualEncoder enc2(cfg, 31);
  CHECK(mb::encode_text(enc2, pairs[0].tokens).data == et.data);
  mb::DualEncoder enc3(cfg, 32);
  CHECK(mb::encode_text(enc3, pairs[0].tokens).data != et.data);
}

TEST_CASE("encoder input validation") {
  const auto cfg = tiny_config();
  mb::DualEncoder enc(cfg, 31);
  CHECK_THROWS_AS(mb::encode_text(enc, {}), std::invalid_argument);
  CHECK_THROWS_AS(mb::encode_text(enc, {0, 99}), std::invalid_argument);
  CHECK_THROWS_AS(mb::encode_text(enc, {-1}), std::invalid_argument);
  CHECK_THROWS_AS(mb::encode_audio(enc, mb::Tensor(mb::Shape{cfg.audio_dim + 1})),
                  std::invalid_argument);
  mb::EncoderConfig bad = cfg;
  bad.vocab_size = 0;
  CHECK_THROWS_AS(mb::DualEncoder(bad, 1), std::invalid_argument);
}

TEST_CASE("gap statistics on constructed pairs") {
  mb::Tensor e0(mb::Shape{2}), e1(mb::Shape{2});
  e0.data = {1.0f, 0.0f};
  e1.data = {0.0f, 1.0f};
  // Pair 1 is fully mismatched, pair 2 fully aligned.
  const std::vector<mb::EmbeddingPair> pairs = {{e0, e1}, {e1, e1}};
  const auto stats = mb::gap_stats(pairs);
  CHECK(stats.centroid_distance == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
  CHECK(stats.mean_pair_linf == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(stats.mean_pair_cosine == doctest::Approx(0.5).epsilon(1e-9));

  CHECK_THROWS_AS(mb::gap_stats({}), std::invalid_argument);
  const std::vector<mb::EmbeddingPair> bad = {{e0, mb::Tensor(mb::Shape{3})}};
  CHECK_THROWS_AS(mb::gap_stats(bad), std::invalid_argument);
}

TEST_CASE("retrieval recall on constructed galleries") {
  mb::Tensor e0(mb::Shape{3}), e1(mb::Shape{3}), e2(mb::Shape{3});
  e0.data = {1.0f, 0.0f, 0.0f};
  e1.data = {0.0f, 1.0f, 0.0f};
  e2.data = {0.0f, 0.0f, 1.0f};
  CHECK(mb::retrieval_recall_at1({{e0, e0}, {e1, e1}, {e2, e2}}) == 1.0);
  // Swapped captions: every query retrieves its neighbor.
  CHECK(mb::retrieval_recall_at1({{e0, e1}, {e1, e0}, {e2, e2}}) ==
        doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(mb::retrieval_recall_at1({}), std::invalid_argument);
}

TEST_CASE("records convert to contrastive pairs through the vocabulary") {
  std::vector<mb::CaptionRecord> records(2);
  records[0].id = "s0";
  records[0].caption = "a b";
  records[0].features = {0.5f, 0.25f};
  records[0].has_features = true;
  records[1].id = "s1";
  records[1].caption = "b c";
  records[1].features = {0.0f, 1.0f};
  records[1].has_features = true;
  const auto vocab = mb::make_vocab({"a", "b", "c"});
  const auto pairs = mb::pairs_from_records(records, vocab);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].tokens == vocab.encode("a b"));
  CHECK(pairs[1].tokens == vocab.encode("b c"));
  CHECK(pairs[0].features.data == std::vector<float>({0.5f, 0.25f}));

  records[1].has_features = false;
  CHECK_THROWS_WITH_AS(mb::pairs_from_records(records, vocab), doctest::Contains("s1"),
                       std::invalid_argument);
}

TEST_CASE("training reduces the loss and is a pure function of the seed") {
  const auto cfg = tiny_config();
  const auto pairs = tiny_pairs(cfg, 24, 123);
  mb::JointspaceTrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 8;
  tc.warmup_steps = 2;
  tc.seed = 5;

  mb::DualEncoder enc(cfg, 31);
  const auto logs = mb::train_jointspace(enc, pairs, tc);
  REQUIRE(logs.size() == 4);
  CHECK(logs.back().loss < logs.front().loss);

  mb::DualEncoder enc2(cfg, 31);
  mb::train_jointspace(enc2, pairs, tc);
  for (size_t i = 0; i < enc.parameters().size(); ++i) {
    CHECK(enc.parameters()[i]->value.data == enc2.parameters()[i]->value.data);
  }

  CHECK_THROWS_AS(mb::train_jointspace(enc, {}, tc), std::invalid_argument);
  mb::JointspaceTrainConfig bad = tc;
  bad.batch_size = 1;
  CHECK_THROWS_AS(mb::train_jointspace(enc, pairs, bad), std::invalid_argument);
}
