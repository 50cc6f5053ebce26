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

namespace mb {

using Tokens = std::vector<std::string>;
using RefSet = std::vector<Tokens>;

// Lowercase, strip ASCII punctuation, split on whitespace. Tokens that
// consist only of punctuation disappear; no empty tokens survive.
Tokens tokenize_caption(const std::string& text);

// Sentence BLEU: geometric mean of clipped modified n-gram precisions for
// n=1..max_n times brevity penalty exp(min(0, 1 - r/c)), r being the
// reference length closest to c (ties take the shorter). No smoothing by
// default; smoothing1 substitutes 0.1 for zero match counts.
double bleu(const Tokens& candidate, const RefSet& references, int max_n,
            bool smoothing1 = false);

// Max over references of the LCS F-score with beta=1.2.
double rouge_l(const Tokens& candidate, const RefSet& references);

// Document frequencies over reference sets: an n-gram counts once per
// example whose reference set contains it anywhere. Keys are n-gram tokens
// joined with 0x1f, so orders cannot collide.
struct CorpusStats {
  std::map<std::string, int64_t> document_frequency;
  int64_t num_documents = 0;
};

CorpusStats build_corpus_stats(const std::vector<RefSet>& references);

struct CiderResult {
  std::vector<double> per_example;
  double mean = 0.0;
};

// CIDEr-D: per n in 1..4, TF-IDF vectors from raw counts with
// idf = ln(num_documents) - ln(max(1, DF)); similarity is the
// reference-clipped cosine times a Gaussian length penalty (sigma = 6);
// score = 10 * mean over n of mean over references.
//
// When both vectors have zero norm for some n (every shared n-gram has
// zero idf, as in a single-document corpus), the cosine is taken as 1 if
// the raw count multisets are identical and non-empty, else 0; this keeps
// the identity candidate at 10.0 where the plain 0/0 guard would not.
CiderResult cider_d(const std::vector<Tokens>& candidates,
                    const std::vector<RefSet>& references, const CorpusStats& stats);

struct MetricReport {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  int64_t num_examples = 0;
};

// Scores a prediction JSONL ({"id","caption"}) against a reference JSONL
// ({"id","captions":[...]}). BLEU is corpus-level (aggregated counts and
// lengths); ROUGE-L and CIDEr-D are example means. Prediction ids must all
// resolve; the error lists every id that does not. A prediction that
// tokenizes to nothing contributes zero overlap instead of failing.
MetricReport evaluate_corpus(const std::string& pred_path, const std::string& ref_path,
                             bool smoothing1 = false);

void write_metric_report(const MetricReport& report, const std::string& json_path,
                         const std::string& csv_path);

}  // namespace mb
