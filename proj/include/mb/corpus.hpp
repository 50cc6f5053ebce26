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
#include <map>
#include <string>
#include <vector>

#include "mb/tensor.hpp"

namespace mb {

struct CorpusConfig {
  uint64_t seed = 7;
  int64_t n_scenes = 2000;
  int n_events = 12;
  int feature_dim = 48;
};

struct CaptionRecord {
  std::string id;
  std::vector<float> features;  // empty when has_features is false
  bool has_features = true;
  std::string caption;
  std::string split;  // train | val | test
  std::string style;  // plain | styled
  std::string pool;   // paired | text-only-extra
};

struct RefRecord {
  std::string id;
  std::vector<std::string> captions;
};

struct GeneratedCorpus {
  CorpusConfig config;
  std::vector<CaptionRecord> records;  // paired records, every split
  std::vector<std::vector<int>> record_events;  // aligned with records
  std::vector<RefRecord> val_refs;
  std::vector<RefRecord> test_refs;
  std::vector<std::string> vocab_words;  // closed over every realizable caption
  std::vector<Tensor> prototypes;       // per-event unit feature prototypes
  double event_recall = 0.0;            // nearest-prototype sanity measure
};

// Deterministic scene generator: features are weighted prototype mixtures
// plus Gaussian noise, captions compose one clause per event. Splits are
// 80/10/10 by id hash. Validation and test event sets always occur in some
// train scene; test caption realizations never occur verbatim in train.
// Regenerates under a derived seed if nearest-prototype event recall on
// the features drops to 90% or below.
GeneratedCorpus generate_corpus(const CorpusConfig& config);

// 1-2 extra text-only captions per train scene, realized from clause
// templates withheld from the paired corpus. No features attached.
std::vector<CaptionRecord> paraphrase_pool(const GeneratedCorpus& corpus, uint64_t seed);

// Deterministic template wrap around the full caption. Styles: 0 "news"
// (fixed wrap), 1 "humorous" (seeded choice of wrap). Wrapper vocabulary
// is disjoint from the event grammar, so distinct inputs stay distinct.
std::string stylize(const std::string& caption, int style_id, uint64_t seed);
int style_id_by_name(const std::string& name);

// Token ids: 0 <pad>, 1 <bos>, 2 <eos>, then the corpus words.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  std::vector<std::string> tokens;  // includes the three specials
  std::map<std::string, int> index;

  int size() const { return static_cast<int>(tokens.size()); }
  int id(const std::string& word) const;            // throws on unknown word
  std::vector<int> encode(const std::string& caption) const;
  std::string decode(const std::vector<int>& ids) const;  // specials skipped
};

Vocab make_vocab(const std::vector<std::string>& words);
Vocab load_vocab(const std::string& path);

// Writes train/val/test JSONL, train_extra JSONL (paraphrase pool),
// reference JSONL for val/test, vocab.json, and manifest.json (file
// hashes; its generated_at field is excluded from idempotence).
void write_corpus(const GeneratedCorpus& corpus, const std::string& out_dir);

std::vector<CaptionRecord> load_records(const std::string& path);
std::vector<RefRecord> load_refs(const std::string& path);

}  // namespace mb
