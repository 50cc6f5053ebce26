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

#include "mb/jointspace.hpp"
#include "mb/param.hpp"
#include "mb/rng.hpp"
#include "mb/tensor.hpp"

namespace mb {

// Isotropic zero-mean Gaussian with standard deviation std.
struct NoiseConfig {
  double std = 0.0;
};

// v + mu, mu_i iid N(0, std^2). The result is deliberately not renormalized;
// downstream consumers take the perturbed vector as-is. std == 0 returns the
// input bit-for-bit and draws nothing from rng.
Embedding inject_noise(const Embedding& v, const NoiseConfig& cfg, RngState& rng);

// n distinct indices from [0, pool), order as drawn.
std::vector<size_t> sample_indices(size_t pool, int n, RngState& rng);

// Mean over n sampled (audio, text) pairs of ||E_a - E_t||_inf. Estimates
// how wide the per-coordinate audio/text offset is, which doubles as the
// noise std used during text-only training.
double estimate_noise_std(const std::vector<EmbeddingPair>& pairs, int n, RngState& rng);

// y = x W + b with W identity-initialized and b zero, so an untrained
// adapter is a no-op. Maps text embeddings toward their paired audio
// embeddings.
struct LinearAdapter {
  int dim = 0;
  Parameter weight;  // [d, d]
  Parameter bias;    // [d]

  explicit LinearAdapter(int d);
  ParamRefs parameters();
};

Embedding apply_adapter(const LinearAdapter& adapter, const Embedding& v);

struct AdapterTrainConfig {
  int epochs = 200;  // full-batch steps
  double lr = 1e-2;
  uint64_t seed = 7;
};

// Per-element mean squared error of x W + b against the audio side.
// All MSE figures in this module share the element-mean convention, so
// ratios and comparisons against the no-adapter gap are unaffected by d.
double adapter_mse(const LinearAdapter& adapter, const std::vector<EmbeddingPair>& pairs);

// Baseline gap with no adapter: per-element mean of (E_a - E_t)^2.
double embedding_gap_mse(const std::vector<EmbeddingPair>& pairs);

// Full-batch Adam on MSE(audio, text W + b). Returns the final training MSE;
// when log is given, appends one (epoch, loss, lr) row per step.
double train_adapter(LinearAdapter& adapter, const std::vector<EmbeddingPair>& pairs,
                     const AdapterTrainConfig& config, std::vector<EpochLog>* log = nullptr);

// adapter (when present) first, then noise (when present); identity when
// both are absent.
Embedding apply_bridge(const Embedding& v, const LinearAdapter* adapter,
                       const NoiseConfig* noise, RngState& rng);

}  // namespace mb
