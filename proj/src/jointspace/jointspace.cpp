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

#include "mb/jointspace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mb/kernels.hpp"
#include "mb/ops.hpp"

namespace mb {

namespace {

Tensor normal_init(RngState& rng, Shape shape, double stddev) {
  Tensor t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

void check_config(const EncoderConfig& c) {
  if (c.vocab_size <= 0) throw std::invalid_argument("EncoderConfig: vocab_size must be positive");
  if (c.token_dim <= 0 || c.embed_dim <= 0 || c.audio_dim <= 0 || c.hidden_dim <= 0)
    throw std::invalid_argument("EncoderConfig: dimensions must be positive");
  if (c.init_temperature <= 0.0)
    throw std::invalid_argument("EncoderConfig: init_temperature must be positive");
}

}  // namespace

DualEncoder::DualEncoder(const EncoderConfig& config, uint64_t init_seed)
    : cfg((check_config(config), config)),
      token_table("jointspace.token_table", Tensor(Shape{config.vocab_size, config.token_dim})),
      text_w1("jointspace.text_w1", Tensor(Shape{config.token_dim, config.hidden_dim})),
      text_b1("jointspace.text_b1", Tensor(Shape{config.hidden_dim})),
      text_w2("jointspace.text_w2", Tensor(Shape{config.hidden_dim, config.embed_dim})),
      text_b2("jointspace.text_b2", Tensor(Shape{config.embed_dim})),
      audio_w1("jointspace.audio_w1", Tensor(Shape{config.audio_dim, config.hidden_dim})),
      audio_b1("jointspace.audio_b1", Tensor(Shape{config.hidden_dim})),
      audio_w2("jointspace.audio_w2", Tensor(Shape{config.hidden_dim, config.embed_dim})),
      audio_b2("jointspace.audio_b2", Tensor(Shape{config.embed_dim})),
      log_temperature("jointspace.log_temperature", Tensor(Shape{})) {
  RngState rng(init_seed);
  token_table.value = normal_init(rng, token_table.value.shape, 0.02);
  auto fan_in_init = [&](Parameter& p) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(p.value.shape.rows()));
    p.value = normal_init(rng, p.value.shape, stddev);
  };
  fan_in_init(text_w1);
  fan_in_init(text_w2);
  fan_in_init(audio_w1);
  fan_in_init(audio_w2);
  log_temperature.value.data[0] = static_cast<float>(std::log(cfg.init_temperature));
}

ParamRefs DualEncoder::parameters() {
  return {&token_table, &text_w1, &text_b1, &text_w2, &text_b2,
          &audio_w1,    &audio_b1, &audio_w2, &audio_b2, &log_temperature};
}

namespace {

template <class T>
int weight_node(Tape<T>& tape, Parameter& p, bool trainable) {
  return trainable ? tape.trainable(p) : tape.constant32(p.value);
}

// x is rank-1 [in]; result is rank-1 [out], unit-normalized.
template <class T>
int mlp_head(Tape<T>& tape, int x, int w1, int b1, int w2, int b2) {
  const int64_t in_dim = tape.val(x).shape.dim(0);
  int h = reshape(tape, x, Shape{1, in_dim});
  h = tanh_act(tape, add_row_broadcast(tape, matmul(tape, h, w1), b1));
  h = add_row_broadcast(tape, matmul(tape, h, w2), b2);
  h = reshape(tape, h, Shape{tape.val(h).shape.cols()});
  return unit_normalize(tape, h);
}

}  // namespace

template <class T>
int encode_text_node(Tape<T>& tape, DualEncoder& enc, const std::vector<int>& tokens,
                     bool trainable) {
  if (tokens.empty()) throw std::invalid_argument("encode_text: empty token sequence");
  for (int id : tokens)
    if (id < 0 || id >= enc.cfg.vocab_size)
      throw std::invalid_argument("encode_text: token id " + std::to_string(id) +
                                  " outside vocabulary of size " +
                                  std::to_string(enc.cfg.vocab_size));
  const int table = weight_node(tape, enc.token_table, trainable);
  const int pooled = mean_rows(tape, embed_rows(tape, table, tokens));
  return mlp_head(tape, pooled, weight_node(tape, enc.text_w1, trainable),
                  weight_node(tape, enc.text_b1, trainable),
                  weight_node(tape, enc.text_w2, trainable),
                  weight_node(tape, enc.text_b2, trainable));
}

template <class T>
int encode_audio_node(Tape<T>& tape, DualEncoder& enc, const Tensor& features,
                      bool trainable) {
  if (features.shape.rank() != 1 ||
      features.shape.dim(0) != static_cast<int64_t>(enc.cfg.audio_dim))
    throw std::invalid_argument("encode_audio: expected a feature vector of dimension " +
                                std::to_string(enc.cfg.audio_dim));
  const int x = tape.constant32(features);
  return mlp_head(tape, x, weight_node(tape, enc.audio_w1, trainable),
                  weight_node(tape, enc.audio_b1, trainable),
                  weight_node(tape, enc.audio_w2, trainable),
                  weight_node(tape, enc.audio_b2, trainable));
}

template int encode_text_node<float>(Tape<float>&, DualEncoder&, const std::vector<int>&, bool);
template int encode_text_node<double>(Tape<double>&, DualEncoder&, const std::vector<int>&, bool);
template int encode_audio_node<float>(Tape<float>&, DualEncoder&, const Tensor&, bool);
template int encode_audio_node<double>(Tape<double>&, DualEncoder&, const Tensor&, bool);

Embedding encode_text(DualEncoder& enc, const std::vector<int>& tokens) {
  Tape<float> tape;
  return tape.val(encode_text_node(tape, enc, tokens, false));
}

Embedding encode_audio(DualEncoder& enc, const Tensor& features) {
  Tape<float> tape;
  return tape.val(encode_audio_node(tape, enc, features, false));
}

template <class T>
int contrastive_loss_node(Tape<T>& tape, const std::vector<int>& audio_nodes,
                          const std::vector<int>& text_nodes, int log_temp_node) {
  if (audio_nodes.size() != text_nodes.size())
    throw std::invalid_argument("contrastive_loss: branch counts differ");
  const size_t n = audio_nodes.size();
  if (n < 2) throw std::invalid_argument("contrastive_loss: needs at least 2 pairs");
  const int ea = stack_rows(tape, audio_nodes);
  const int et = stack_rows(tape, text_nodes);
  const int sims = scale_by(tape, matmul_nt(tape, ea, et), exp_scalar(tape, log_temp_node));
  std::vector<int> diagonal(n);
  std::iota(diagonal.begin(), diagonal.end(), 0);
  const std::vector<char> all(n, 1);
  const int row_loss = cross_entropy_rows(tape, sims, diagonal, all);
  const int col_loss = cross_entropy_rows(tape, transpose(tape, sims), diagonal, all);
  return scale(tape, add(tape, row_loss, col_loss), 0.5);
}

template int contrastive_loss_node<float>(Tape<float>&, const std::vector<int>&,
                                          const std::vector<int>&, int);
template int contrastive_loss_node<double>(Tape<double>&, const std::vector<int>&,
                                           const std::vector<int>&, int);

namespace {

template <class T>
int batch_loss_node(Tape<T>& tape, DualEncoder& enc,
                    const std::vector<ContrastivePair>& batch, bool trainable) {
  std::vector<int> audio_nodes, text_nodes;
  audio_nodes.reserve(batch.size());
  text_nodes.reserve(batch.size());
  for (const auto& pair : batch) {
    audio_nodes.push_back(encode_audio_node(tape, enc, pair.features, trainable));
    text_nodes.push_back(encode_text_node(tape, enc, pair.tokens, trainable));
  }
  const int log_temp = weight_node(tape, enc.log_temperature, trainable);
  return contrastive_loss_node(tape, audio_nodes, text_nodes, log_temp);
}

}  // namespace

double contrastive_loss(DualEncoder& enc, const std::vector<ContrastivePair>& batch) {
  Tape<float> tape;
  return static_cast<double>(tape.val(batch_loss_node(tape, enc, batch, false)).scalar());
}

std::vector<EpochLog> train_jointspace(DualEncoder& enc,
                                       const std::vector<ContrastivePair>& pairs,
                                       const JointspaceTrainConfig& config) {
  if (pairs.empty()) throw std::invalid_argument("train_jointspace: no training pairs");
  if (config.epochs < 0) throw std::invalid_argument("train_jointspace: negative epochs");
  if (config.batch_size < 2)
    throw std::invalid_argument("train_jointspace: batch_size must be at least 2");
  const ParamRefs params = enc.parameters();
  std::vector<EpochLog> log;
  if (config.epochs == 0) return log;

  const int64_t steps_per_epoch =
      std::max<int64_t>(1, (static_cast<int64_t>(pairs.size()) + config.batch_size - 1) /
                               config.batch_size);
  const int64_t total_steps = steps_per_epoch * config.epochs;
  // Short runs (tests, tiny corpora) may not reach the configured warmup.
  const int64_t warmup = std::min(config.warmup_steps, total_steps - 1);
  RngState shuffle_rng = RngState(config.seed).fork(0x5F);

  int64_t step = 0;
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t epoch_batches = 0;
    double last_lr = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      // A trailing singleton has no negatives to push against; fold it into
      // nothing rather than feed a degenerate softmax.
      if (stop - start < 2) break;
      std::vector<ContrastivePair> batch;
      batch.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) batch.push_back(pairs[order[i]]);

      Tape<float> tape;
      const int loss = batch_loss_node(tape, enc, batch, true);
      zero_grad(params);
      tape.backward(loss);
      tape.apply_param_grads();
      const double lr = lr_at(step, config.lr, warmup, total_steps);
      adam_step(params, lr);
      ++step;
      epoch_loss += static_cast<double>(tape.val(loss).scalar());
      ++epoch_batches;
      last_lr = lr;
    }
    log.push_back({epoch, epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0,
                   last_lr});
  }
  return log;
}

GapStats gap_stats(const std::vector<EmbeddingPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("gap_stats: no embedding pairs");
  const size_t dim = pairs[0].first.data.size();
  std::vector<double> centroid_a(dim, 0.0), centroid_t(dim, 0.0);
  double linf_sum = 0.0, cos_sum = 0.0;
  for (const auto& [ea, et] : pairs) {
    if (ea.data.size() != dim || et.data.size() != dim)
      throw std::invalid_argument("gap_stats: inconsistent embedding dimensions");
    double linf = 0.0, dot = 0.0, na = 0.0, nt = 0.0;
    for (size_t i = 0; i < dim; ++i) {
      const double a = static_cast<double>(ea.data[i]);
      const double t = static_cast<double>(et.data[i]);
      centroid_a[i] += a;
      centroid_t[i] += t;
      linf = std::max(linf, std::abs(a - t));
      dot += a * t;
      na += a * a;
      nt += t * t;
    }
    linf_sum += linf;
    const double denom = std::sqrt(na) * std::sqrt(nt);
    cos_sum += denom > 0.0 ? dot / denom : 1.0;
  }
  const double n = static_cast<double>(pairs.size());
  double dist2 = 0.0;
  for (size_t i = 0; i < dim; ++i) {
    const double d = centroid_a[i] / n - centroid_t[i] / n;
    dist2 += d * d;
  }
  return {std::sqrt(dist2), linf_sum / n, cos_sum / n};
}

std::vector<EmbeddingPair> encode_pairs(DualEncoder& enc,
                                        const std::vector<ContrastivePair>& pairs) {
  std::vector<EmbeddingPair> out;
  out.reserve(pairs.size());
  for (const auto& pair : pairs)
    out.emplace_back(encode_audio(enc, pair.features), encode_text(enc, pair.tokens));
  return out;
}

double retrieval_recall_at1(const std::vector<EmbeddingPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("retrieval_recall_at1: no embedding pairs");
  const auto& ops = kern::active();
  size_t hits = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& query = pairs[i].first;
    size_t best = 0;
    double best_sim = 0.0;
    for (size_t j = 0; j < pairs.size(); ++j) {
      const auto& key = pairs[j].second;
      const double sim = ops.dot(query.data.data(), key.data.data(), query.data.size());
      if (j == 0 || sim > best_sim) {
        best = j;
        best_sim = sim;
      }
    }
    hits += best == i;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

std::vector<ContrastivePair> pairs_from_records(const std::vector<CaptionRecord>& records,
                                                const Vocab& vocab) {
  std::vector<ContrastivePair> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    if (!rec.has_features)
      throw std::invalid_argument("pairs_from_records: record " + rec.id + " has no features");
    ContrastivePair pair;
    pair.features = Tensor(Shape{static_cast<int64_t>(rec.features.size())});
    std::copy(rec.features.begin(), rec.features.end(), pair.features.data.begin());
    pair.tokens = vocab.encode(rec.caption);
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace mb
