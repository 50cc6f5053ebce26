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

#include "mb/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mb/ops.hpp"
#include "mb/tape.hpp"

namespace mb {

Embedding inject_noise(const Embedding& v, const NoiseConfig& cfg, RngState& rng) {
  if (!(cfg.std >= 0.0)) throw std::invalid_argument("inject_noise: std must be non-negative");
  if (v.shape.rank() != 1) throw std::invalid_argument("inject_noise: expected a rank-1 vector");
  check_finite(v, "inject_noise input");
  if (cfg.std == 0.0) return v;
  Embedding out = v;
  for (auto& x : out.data) x += static_cast<float>(rng.normal() * cfg.std);
  return out;
}

std::vector<size_t> sample_indices(size_t pool, int n, RngState& rng) {
  if (n < 0) throw std::invalid_argument("sample_indices: negative count");
  if (static_cast<size_t>(n) > pool)
    throw std::invalid_argument("sample_indices: pool of " + std::to_string(pool) +
                                " cannot supply " + std::to_string(n) + " distinct indices");
  std::vector<size_t> all(pool);
  for (size_t i = 0; i < pool; ++i) all[i] = i;
  // Partial Fisher-Yates: position i receives a uniform draw from [i, pool).
  for (int i = 0; i < n; ++i) {
    const size_t j = static_cast<size_t>(i) +
                     static_cast<size_t>(rng.uniform_below(pool - static_cast<size_t>(i)));
    std::swap(all[static_cast<size_t>(i)], all[j]);
  }
  all.resize(static_cast<size_t>(n));
  return all;
}

double estimate_noise_std(const std::vector<EmbeddingPair>& pairs, int n, RngState& rng) {
  if (n <= 0) throw std::invalid_argument("estimate_noise_std: sample count must be positive");
  if (pairs.size() < static_cast<size_t>(n))
    throw std::invalid_argument("estimate_noise_std: need at least " + std::to_string(n) +
                                " pairs, have " + std::to_string(pairs.size()));
  const std::vector<size_t> picks = sample_indices(pairs.size(), n, rng);
  double total = 0.0;
  for (size_t idx : picks) total += linf_distance(pairs[idx].first, pairs[idx].second);
  return total / static_cast<double>(n);
}

LinearAdapter::LinearAdapter(int d)
    : dim(d),
      weight("adapter.weight", Tensor(Shape{d, d})),
      bias("adapter.bias", Tensor(Shape{d})) {
  if (d <= 0) throw std::invalid_argument("LinearAdapter: dimension must be positive");
  for (int i = 0; i < d; ++i) weight.value.at(i, i) = 1.0f;
}

ParamRefs LinearAdapter::parameters() { return {&weight, &bias}; }

Embedding apply_adapter(const LinearAdapter& adapter, const Embedding& v) {
  if (v.shape.rank() != 1 || v.shape.dim(0) != static_cast<int64_t>(adapter.dim))
    throw std::invalid_argument("apply_adapter: expected a vector of dimension " +
                                std::to_string(adapter.dim));
  Embedding out(v.shape);
  for (int j = 0; j < adapter.dim; ++j) {
    double acc = static_cast<double>(adapter.bias.value.at(j));
    for (int i = 0; i < adapter.dim; ++i)
      acc += static_cast<double>(v.at(i)) * static_cast<double>(adapter.weight.value.at(i, j));
    out.data[static_cast<size_t>(j)] = static_cast<float>(acc);
  }
  return out;
}

namespace {

// Stacks the pair list into (text, audio) matrices for full-batch training.
void stack_pairs(const std::vector<EmbeddingPair>& pairs, int dim, Tensor& text, Tensor& audio) {
  const int64_t n = static_cast<int64_t>(pairs.size());
  text = Tensor(Shape{n, dim});
  audio = Tensor(Shape{n, dim});
  for (int64_t r = 0; r < n; ++r) {
    const auto& [ea, et] = pairs[static_cast<size_t>(r)];
    if (ea.shape.rank() != 1 || ea.shape.dim(0) != dim || et.shape.rank() != 1 ||
        et.shape.dim(0) != dim)
      throw std::invalid_argument("adapter pairs: embedding dimension mismatch");
    for (int c = 0; c < dim; ++c) {
      text.at(r, c) = et.at(c);
      audio.at(r, c) = ea.at(c);
    }
  }
}

template <class T>
int adapter_loss_node(Tape<T>& tape, LinearAdapter& adapter, const Tensor& text,
                      const Tensor& audio, bool trainable) {
  const int x = tape.constant32(text);
  const int y = tape.constant32(audio);
  const int w = trainable ? tape.trainable(adapter.weight) : tape.constant32(adapter.weight.value);
  const int b = trainable ? tape.trainable(adapter.bias) : tape.constant32(adapter.bias.value);
  const int pred = add_row_broadcast(tape, matmul(tape, x, w), b);
  return mean_squared_error(tape, pred, y);
}

}  // namespace

double adapter_mse(const LinearAdapter& adapter, const std::vector<EmbeddingPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("adapter_mse: no pairs");
  Tensor text, audio;
  stack_pairs(pairs, adapter.dim, text, audio);
  Tape<float> tape;
  LinearAdapter& mut = const_cast<LinearAdapter&>(adapter);  // read-only path
  return static_cast<double>(tape.val(adapter_loss_node(tape, mut, text, audio, false)).scalar());
}

double embedding_gap_mse(const std::vector<EmbeddingPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("embedding_gap_mse: no pairs");
  double total = 0.0;
  size_t count = 0;
  for (const auto& [ea, et] : pairs) {
    if (ea.data.size() != et.data.size())
      throw std::invalid_argument("embedding_gap_mse: embedding dimension mismatch");
    for (size_t i = 0; i < ea.data.size(); ++i) {
      const double d = static_cast<double>(ea.data[i]) - static_cast<double>(et.data[i]);
      total += d * d;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double train_adapter(LinearAdapter& adapter, const std::vector<EmbeddingPair>& pairs,
                     const AdapterTrainConfig& config, std::vector<EpochLog>* log) {
  if (pairs.empty()) throw std::invalid_argument("train_adapter: no training pairs");
  if (config.epochs < 0) throw std::invalid_argument("train_adapter: negative epochs");
  Tensor text, audio;
  stack_pairs(pairs, adapter.dim, text, audio);
  const ParamRefs params = adapter.parameters();
  if (config.epochs == 0) return adapter_mse(adapter, pairs);

  const int64_t total_steps = config.epochs;
  const int64_t warmup = std::min<int64_t>(10, total_steps - 1);
  double final_mse = 0.0;
  for (int64_t step = 0; step < total_steps; ++step) {
    Tape<float> tape;
    const int loss = adapter_loss_node(tape, adapter, text, audio, true);
    zero_grad(params);
    tape.backward(loss);
    tape.apply_param_grads();
    const double lr = lr_at(step, config.lr, warmup, total_steps);
    adam_step(params, lr);
    final_mse = static_cast<double>(tape.val(loss).scalar());
    if (log) log->push_back({static_cast<int>(step), final_mse, lr});
  }
  return final_mse;
}

Embedding apply_bridge(const Embedding& v, const LinearAdapter* adapter,
                       const NoiseConfig* noise, RngState& rng) {
  Embedding out = adapter ? apply_adapter(*adapter, v) : v;
  if (noise) out = inject_noise(out, *noise, rng);
  return out;
}

}  // namespace mb
