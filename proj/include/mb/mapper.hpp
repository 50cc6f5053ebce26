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

#include "mb/decoder.hpp"
#include "mb/param.hpp"
#include "mb/tape.hpp"
#include "mb/tensor.hpp"

namespace mb {

struct MapperConfig {
  int input_dim = 32;    // joint embedding dimension d
  int prefix_len = 8;    // k
  int model_dim = 64;    // d_m, must match the decoder
  int n_layers = 2;
  int n_heads = 4;
  int ff_mult = 4;
};

// Turns one joint-space vector into a k x d_m prefix. The input projection
// emits k vectors, which are concatenated with k learnable-constant rows;
// a small bidirectional transformer mixes all 2k positions and the rows at
// the constant positions become the prefix. The mixer needs no positional
// table: projected rows and constant rows are distinguishable by content.
// This is the only trainable module of the captioning stage.
struct MappingNetwork {
  MapperConfig cfg;
  Parameter in_proj_w;  // [d, k*d_m]
  Parameter in_proj_b;  // [k*d_m]
  Parameter constant;   // [k, d_m]
  std::vector<TransformerBlock> blocks;
  Parameter ln_f_g, ln_f_b;

  MappingNetwork(const MapperConfig& config, uint64_t init_seed);
  ParamRefs parameters();
};

// Prefix node [k, d_m] from a rank-1 input node of dimension d.
template <class T>
int mapper_prefix_node(Tape<T>& tape, MappingNetwork& mapper, int v, bool trainable);

// Plain evaluation.
Tensor build_prefix(MappingNetwork& mapper, const Embedding& v);

}  // namespace mb
