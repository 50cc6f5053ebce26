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
#include <string>
#include <vector>

#include "mb/param.hpp"
#include "mb/rng.hpp"
#include "mb/tape.hpp"
#include "mb/tensor.hpp"

namespace mb {

// Pre-norm transformer block: x += attn(ln1(x)); x += ff(ln2(x)).
// Shared between the decoder (causal) and the prefix mixer (bidirectional).
struct TransformerBlock {
  Parameter ln1_g, ln1_b;
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln2_g, ln2_b;
  Parameter ff_w1, ff_b1, ff_w2, ff_b2;

  TransformerBlock(const std::string& name_prefix, int d_m, int ff_dim, RngState& rng);
  void collect(ParamRefs& out);
};

template <class T>
int transformer_block_node(Tape<T>& tape, TransformerBlock& block, int x, int heads,
                           bool causal, bool trainable);

struct DecoderConfig {
  int vocab_size = 0;  // required; includes PAD/BOS/EOS
  int model_dim = 64;  // d_m
  int n_layers = 2;
  int n_heads = 4;
  int max_positions = 64;  // L_max
  int ff_mult = 4;
};

// Small causal language model. Pretrained once on the caption pool, then
// frozen: captioner training reads its weights as tape constants and every
// checkpoint hash must survive that stage unchanged.
struct DecoderLM {
  DecoderConfig cfg;
  Parameter token_table;  // [V, d_m]
  Parameter pos_table;    // [L_max, d_m]
  std::vector<TransformerBlock> blocks;
  Parameter ln_f_g, ln_f_b;
  Parameter out_proj;     // [d_m, V], no bias

  DecoderLM(const DecoderConfig& config, uint64_t init_seed);
  ParamRefs parameters();
};

// Logits [T, V] over an embedded input sequence node x_embed [T, d_m].
// Adds positional rows 0..T-1; the attention mask is always causal.
template <class T>
int decoder_logits_node(Tape<T>& tape, DecoderLM& dec, int x_embed, bool trainable);

struct DecoderPretrainConfig {
  int epochs = 12;
  int batch_size = 16;
  double lr = 1e-3;
  int64_t warmup_steps = 100;
  uint64_t seed = 7;
};

struct DecoderEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// Next-token training: input BOS + w_1..w_m, targets w_1..w_m + EOS, all
// positions in the loss. Token sequences must fit the position table and
// the vocabulary.
std::vector<DecoderEpochLog> pretrain_decoder(DecoderLM& dec,
                                              const std::vector<std::vector<int>>& captions,
                                              const DecoderPretrainConfig& config);

// exp(total NLL / total target tokens) under teacher forcing.
double decoder_perplexity(DecoderLM& dec, const std::vector<std::vector<int>>& captions);

// Incremental decoder evaluation with per-layer KV caches. All arithmetic
// is double, independent of the f32 training path; copyable so beam search
// can fork hypothesis states.
class DecoderInfer {
 public:
  explicit DecoderInfer(const DecoderLM& dec);

  // Feeds one already-embedded row (a prefix vector). Returns log-probs
  // over the vocabulary at this position.
  std::vector<double> step_embedding(const float* row);
  // Feeds one token through the embedding table.
  std::vector<double> step_token(int token_id);

  int position() const { return pos_; }

 private:
  std::vector<double> step(std::vector<double> x);

  const DecoderLM* dec_;
  // Per layer, position-major [t * d_m + i].
  std::vector<std::vector<double>> kcache_, vcache_;
  int pos_ = 0;
};

}  // namespace mb
