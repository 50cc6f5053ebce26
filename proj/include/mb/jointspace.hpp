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
#include <utility>
#include <vector>

#include "mb/corpus.hpp"
#include "mb/param.hpp"
#include "mb/rng.hpp"
#include "mb/tape.hpp"
#include "mb/tensor.hpp"

namespace mb {

struct EncoderConfig {
  int vocab_size = 0;  // required
  int token_dim = 32;  // d_h
  int embed_dim = 32;  // d, the joint space
  int audio_dim = 48;  // d_a
  int hidden_dim = 64;
  double init_temperature = 14.3;  // exp(log_temperature) at init
};

// Contrastive dual encoder. The text branch mean-pools token embeddings
// through a 2-layer tanh MLP; the audio branch runs the same MLP shape on
// raw feature vectors. Both ends are L2-normalized. Branches share nothing
// but the joint dimension.
struct DualEncoder {
  EncoderConfig cfg;
  Parameter token_table;                       // [V, d_h]
  Parameter text_w1, text_b1, text_w2, text_b2;
  Parameter audio_w1, audio_b1, audio_w2, audio_b2;
  Parameter log_temperature;                   // scalar

  DualEncoder(const EncoderConfig& config, uint64_t init_seed);
  ParamRefs parameters();
};

// Graph builders. When trainable is false every weight enters the tape as
// a constant, so the reverse sweep never touches the encoder.
template <class T>
int encode_text_node(Tape<T>& tape, DualEncoder& enc, const std::vector<int>& tokens,
                     bool trainable);
template <class T>
int encode_audio_node(Tape<T>& tape, DualEncoder& enc, const Tensor& features,
                      bool trainable);

// Plain unit-norm embeddings (no gradients).
Embedding encode_text(DualEncoder& enc, const std::vector<int>& tokens);
Embedding encode_audio(DualEncoder& enc, const Tensor& features);

// Symmetric InfoNCE over a stacked batch: similarities scaled by
// exp(log_temperature), cross-entropy against the diagonal in both
// directions, averaged. audio_nodes/text_nodes are rank-1 tape nodes.
template <class T>
int contrastive_loss_node(Tape<T>& tape, const std::vector<int>& audio_nodes,
                          const std::vector<int>& text_nodes, int log_temp_node);

struct ContrastivePair {
  Tensor features;          // d_a
  std::vector<int> tokens;  // caption token ids
};

double contrastive_loss(DualEncoder& enc, const std::vector<ContrastivePair>& batch);

struct JointspaceTrainConfig {
  int epochs = 8;
  int batch_size = 64;
  double lr = 1e-3;
  int64_t warmup_steps = 100;
  uint64_t seed = 7;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

std::vector<EpochLog> train_jointspace(DualEncoder& enc,
                                       const std::vector<ContrastivePair>& pairs,
                                       const JointspaceTrainConfig& config);

struct GapStats {
  double centroid_distance = 0.0;  // ||mean(E_a) - mean(E_t)||_2
  double mean_pair_linf = 0.0;     // mean ||E_a - E_t||_inf
  double mean_pair_cosine = 0.0;
};

using EmbeddingPair = std::pair<Embedding, Embedding>;  // (audio, text)

GapStats gap_stats(const std::vector<EmbeddingPair>& pairs);

std::vector<EmbeddingPair> encode_pairs(DualEncoder& enc,
                                        const std::vector<ContrastivePair>& pairs);

// Fraction of audio embeddings whose nearest text embedding (cosine) is
// their own pair.
double retrieval_recall_at1(const std::vector<EmbeddingPair>& pairs);

// Tokenizes paired records against the vocab; requires features.
std::vector<ContrastivePair> pairs_from_records(const std::vector<CaptionRecord>& records,
                                                const Vocab& vocab);

}  // namespace mb
