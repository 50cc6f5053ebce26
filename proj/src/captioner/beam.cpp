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

#include "mb/beam.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mb {

namespace {

bool better(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.tokens < b.tokens;
}

struct Candidate {
  BeamHypothesis hyp;
  int parent = -1;  // live-hypothesis index when a decoder step is still owed
};

}  // namespace

std::vector<BeamHypothesis> beam_search(const DecoderLM& dec, const Tensor& prefix,
                                        const BeamConfig& cfg) {
  if (cfg.beam < 1) throw std::invalid_argument("beam_search: beam must be at least 1");
  if (cfg.max_len < 0) throw std::invalid_argument("beam_search: negative max_len");
  if (prefix.shape.rank() != 2 || prefix.shape.rows() < 1 ||
      prefix.shape.cols() != static_cast<int64_t>(dec.cfg.model_dim))
    throw std::invalid_argument("beam_search: prefix must be [k, model_dim] with k >= 1");
  if (prefix.shape.rows() + cfg.max_len > dec.cfg.max_positions)
    throw std::invalid_argument("beam_search: prefix plus max_len exceeds decoder positions");
  if (cfg.eos_id < 0 || cfg.eos_id >= dec.cfg.vocab_size)
    throw std::invalid_argument("beam_search: eos_id outside vocabulary");
  std::vector<char> banned(static_cast<size_t>(dec.cfg.vocab_size), 0);
  for (int id : cfg.banned) {
    if (id < 0 || id >= dec.cfg.vocab_size)
      throw std::invalid_argument("beam_search: banned id outside vocabulary");
    if (id == cfg.eos_id) throw std::invalid_argument("beam_search: eos_id cannot be banned");
    banned[static_cast<size_t>(id)] = 1;
  }

  struct Live {
    BeamHypothesis hyp;
    DecoderInfer state;
    std::vector<double> dist;  // log-probs after the last fed position
  };

  DecoderInfer seed(dec);
  std::vector<double> seed_dist;
  for (int64_t r = 0; r < prefix.shape.rows(); ++r)
    seed_dist = seed.step_embedding(prefix.row_ptr(r));

  std::vector<Live> live;
  live.push_back({BeamHypothesis{}, std::move(seed), std::move(seed_dist)});
  std::vector<BeamHypothesis> completed;

  while (!live.empty()) {
    std::vector<Candidate> cands;
    for (auto& c : completed) cands.push_back({std::move(c), -1});
    completed.clear();

    for (size_t li = 0; li < live.size(); ++li) {
      const Live& l = live[li];
      if (static_cast<int>(l.hyp.tokens.size()) >= cfg.max_len) {
        BeamHypothesis h = l.hyp;
        h.logprob += l.dist[static_cast<size_t>(cfg.eos_id)];
        h.done = true;
        cands.push_back({std::move(h), -1});
        continue;
      }
      for (int v = 0; v < dec.cfg.vocab_size; ++v) {
        if (banned[static_cast<size_t>(v)]) continue;
        const bool finished = v == cfg.eos_id;
        BeamHypothesis h = l.hyp;
        h.logprob += l.dist[static_cast<size_t>(v)];
        if (finished) {
          h.done = true;
        } else {
          h.tokens.push_back(v);
        }
        cands.push_back({std::move(h), finished ? -1 : static_cast<int>(li)});
      }
    }

    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return better(a.hyp, b.hyp); });
    if (cands.size() > static_cast<size_t>(cfg.beam)) cands.resize(static_cast<size_t>(cfg.beam));

    // The last surviving child of a live hypothesis can steal its cache.
    std::vector<int> pending(live.size(), 0);
    for (const auto& c : cands)
      if (c.parent >= 0) ++pending[static_cast<size_t>(c.parent)];

    std::vector<Live> next_live;
    for (auto& c : cands) {
      if (c.parent < 0) {
        completed.push_back(std::move(c.hyp));
        continue;
      }
      Live& parent = live[static_cast<size_t>(c.parent)];
      DecoderInfer state = --pending[static_cast<size_t>(c.parent)] == 0
                               ? std::move(parent.state)
                               : parent.state;
      std::vector<double> dist = state.step_token(c.hyp.tokens.back());
      next_live.push_back({std::move(c.hyp), std::move(state), std::move(dist)});
    }
    live = std::move(next_live);
  }

  std::sort(completed.begin(), completed.end(), better);
  return completed;
}

}  // namespace mb
