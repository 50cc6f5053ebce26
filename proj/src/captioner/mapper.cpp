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

#include "mb/mapper.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mb {

namespace {

Tensor normal_init(RngState& rng, Shape shape, double stddev) {
  Tensor t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

Tensor ones(Shape shape) {
  Tensor t(shape);
  std::fill(t.data.begin(), t.data.end(), 1.0f);
  return t;
}

void check_mapper_config(const MapperConfig& c) {
  if (c.input_dim <= 0 || c.prefix_len <= 0 || c.model_dim <= 0 || c.n_layers <= 0 ||
      c.n_heads <= 0 || c.ff_mult <= 0)
    throw std::invalid_argument("MapperConfig: dimensions must be positive");
  if (c.model_dim % c.n_heads != 0)
    throw std::invalid_argument("MapperConfig: n_heads must divide model_dim");
}

}  // namespace

MappingNetwork::MappingNetwork(const MapperConfig& config, uint64_t init_seed)
    : cfg((check_mapper_config(config), config)),
      in_proj_w("mapper.in_proj_w",
                Tensor(Shape{config.input_dim, config.prefix_len * config.model_dim})),
      in_proj_b("mapper.in_proj_b", Tensor(Shape{config.prefix_len * config.model_dim})),
      constant("mapper.constant", Tensor(Shape{config.prefix_len, config.model_dim})),
      ln_f_g("mapper.ln_f_g", ones(Shape{config.model_dim})),
      ln_f_b("mapper.ln_f_b", Tensor(Shape{config.model_dim})) {
  RngState rng(init_seed);
  const double in_std = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
  in_proj_w.value = normal_init(rng, in_proj_w.value.shape, in_std);
  constant.value = normal_init(rng, constant.value.shape, 0.02);
  for (int l = 0; l < cfg.n_layers; ++l)
    blocks.emplace_back("mapper.block" + std::to_string(l), cfg.model_dim,
                        cfg.model_dim * cfg.ff_mult, rng);
}

ParamRefs MappingNetwork::parameters() {
  ParamRefs out{&in_proj_w, &in_proj_b, &constant};
  for (auto& b : blocks) b.collect(out);
  out.push_back(&ln_f_g);
  out.push_back(&ln_f_b);
  return out;
}

template <class T>
int mapper_prefix_node(Tape<T>& tape, MappingNetwork& mapper, int v, bool trainable) {
  const auto& shape = tape.val(v).shape;
  if (shape.rank() != 1 || shape.dim(0) != static_cast<int64_t>(mapper.cfg.input_dim))
    throw std::invalid_argument("mapper: expected an input vector of dimension " +
                                std::to_string(mapper.cfg.input_dim));
  auto w = [&](Parameter& p) { return trainable ? tape.trainable(p) : tape.constant32(p.value); };
  const int64_t k = mapper.cfg.prefix_len;
  const int64_t d_m = mapper.cfg.model_dim;

  int x = reshape(tape, v, Shape{1, mapper.cfg.input_dim});
  x = add_row_broadcast(tape, matmul(tape, x, w(mapper.in_proj_w)), w(mapper.in_proj_b));
  x = reshape(tape, x, Shape{k, d_m});
  x = concat_rows(tape, {x, w(mapper.constant)});
  for (auto& block : mapper.blocks)
    x = transformer_block_node(tape, block, x, mapper.cfg.n_heads, /*causal=*/false, trainable);
  x = layer_norm(tape, x, w(mapper.ln_f_g), w(mapper.ln_f_b), 1e-5);
  return slice_rows(tape, x, k, 2 * k);
}

template int mapper_prefix_node<float>(Tape<float>&, MappingNetwork&, int, bool);
template int mapper_prefix_node<double>(Tape<double>&, MappingNetwork&, int, bool);

Tensor build_prefix(MappingNetwork& mapper, const Embedding& v) {
  check_finite(v, "mapper input");
  Tape<float> tape;
  const int node = mapper_prefix_node(tape, mapper, tape.constant32(v), false);
  return tape.val(node);
}

}  // namespace mb
