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

#include "mb/beam.hpp"
#include "mb/bridge.hpp"
#include "mb/corpus.hpp"
#include "mb/decoder.hpp"
#include "mb/jointspace.hpp"
#include "mb/mapper.hpp"

namespace mb {

// One training example. input_tokens feed the text encoder; target_tokens
// are the caption the decoder must emit. In the default setup the two are
// the same sequence; paraphrase experiments may split them. Audio features
// exist only for examples built in audio-text mode: the text-only builder
// drops them outright, so that path cannot read them even by accident.
struct CaptionExample {
  std::string id;
  std::vector<int> input_tokens;
  std::vector<int> target_tokens;
  Tensor features{Shape{}};
  bool has_features = false;
};

enum class CaptionMode { kTextOnly, kAudioText };

CaptionMode caption_mode_from_name(const std::string& name);
std::string caption_mode_name(CaptionMode mode);

// Builds examples from corpus records. Text-only keeps captions and ids
// only; audio-text requires features on every record.
std::vector<CaptionExample> examples_from_records(const std::vector<CaptionRecord>& records,
                                                  const Vocab& vocab, CaptionMode mode);

// Mean NLL over the caption positions of [prefix rows, caption embeddings]:
// row k-1 predicts the first caption token and row k+m-1 predicts the
// terminator, so the prefix itself is never a target. caption holds word
// ids without specials.
template <class T>
int caption_loss_node(Tape<T>& tape, DecoderLM& dec, int prefix_node,
                      const std::vector<int>& caption);

double caption_loss(DecoderLM& dec, const Tensor& prefix, const std::vector<int>& caption);

struct CaptionerTrainConfig {
  int epochs = 8;
  int batch_size = 16;
  double lr = 1e-3;
  int64_t warmup_steps = 100;
  uint64_t seed = 7;
};

struct CaptionerEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// Trains the mapper; encoder and decoder stay frozen (their weights enter
// every tape as constants). Text-only mode encodes input_tokens and pushes
// the embedding through adapter/noise (either may be null); audio-text mode
// encodes features directly and ignores the bridge. Noise is redrawn per
// example per epoch from a stream forked off config.seed.
std::vector<CaptionerEpochLog> train_captioner(CaptionMode mode, MappingNetwork& mapper,
                                               DecoderLM& dec, DualEncoder& enc,
                                               const LinearAdapter* adapter,
                                               const NoiseConfig* noise,
                                               const std::vector<CaptionExample>& examples,
                                               const CaptionerTrainConfig& config);

struct InferResult {
  std::vector<int> tokens;
  std::string caption;
  double logprob = 0.0;
};

// Decodes from an explicit prefix (also used by the shuffled-prefix probe).
InferResult infer_from_prefix(DecoderLM& dec, const Tensor& prefix, const Vocab& vocab,
                              int beam, int max_len);

// Encoder swap: prefix = mapper(audio encoder(features)). No noise and no
// adapter are applied on this path.
InferResult infer_caption(MappingNetwork& mapper, DecoderLM& dec, DualEncoder& enc,
                          const Tensor& audio_features, const Vocab& vocab, int beam,
                          int max_len);

}  // namespace mb
