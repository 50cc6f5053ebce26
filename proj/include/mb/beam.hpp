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

#include <vector>

#include "mb/decoder.hpp"
#include "mb/tensor.hpp"

namespace mb {

struct BeamHypothesis {
  std::vector<int> tokens;  // emitted ids, terminator excluded
  double logprob = 0.0;     // cumulative, terminator included, unnormalized
  bool done = false;
};

struct BeamConfig {
  int beam = 5;
  int max_len = 20;          // tokens before the terminator is forced
  int eos_id = 2;
  std::vector<int> banned;   // never expanded (padding, begin marker)
};

// Standard beam search seeded by an embedded prefix. Hypotheses are scored
// by total log-probability with no length normalization; a hypothesis that
// emits eos_id completes, and eos is forced (its log-prob still charged) at
// max_len. Ties break toward the lexicographically smaller token sequence.
// Returns up to `beam` completed hypotheses, best first.
std::vector<BeamHypothesis> beam_search(const DecoderLM& dec, const Tensor& prefix,
                                        const BeamConfig& cfg);

}  // namespace mb
