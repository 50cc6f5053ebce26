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

#include "mb/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mb/jsonl.hpp"

namespace mb {
namespace {

constexpr char kSep = '\x1f';
constexpr int kMaxN = 4;
constexpr double kBeta = 1.2;
constexpr double kSigma = 6.0;

using CountMap = std::map<std::string, int64_t>;

std::string ngram_key(const Tokens& toks, size_t start, int n) {
  std::string key = toks[start];
  for (int i = 1; i < n; ++i) {
    key.push_back(kSep);
    key.append(toks[start + static_cast<size_t>(i)]);
  }
  return key;
}

CountMap ngram_counts(const Tokens& toks, int n) {
  CountMap counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i) {
    ++counts[ngram_key(toks, i, n)];
  }
  return counts;
}

// Reference length closest to the candidate length; ties take the shorter.
int64_t closest_ref_length(int64_t c, const RefSet& refs) {
  int64_t best = static_cast<int64_t>(refs[0].size());
  for (const Tokens& r : refs) {
    const int64_t len = static_cast<int64_t>(r.size());
    const int64_t da = std::llabs(len - c), db = std::llabs(best - c);
    if (da < db || (da == db && len < best)) best = len;
  }
  return best;
}

struct BleuTallies {
  int64_t matched[kMaxN] = {0, 0, 0, 0};
  int64_t total[kMaxN] = {0, 0, 0, 0};
  int64_t cand_len = 0;
  int64_t ref_len = 0;
};

void tally_example(const Tokens& cand, const RefSet& refs, BleuTallies& out) {
  out.cand_len += static_cast<int64_t>(cand.size());
  out.ref_len += closest_ref_length(static_cast<int64_t>(cand.size()), refs);
  for (int n = 1; n <= kMaxN; ++n) {
    const CountMap cc = ngram_counts(cand, n);
    CountMap cap;
    for (const Tokens& r : refs) {
      for (const auto& [key, cnt] : ngram_counts(r, n)) {
        cap[key] = std::max(cap[key], cnt);
      }
    }
    for (const auto& [key, cnt] : cc) {
      out.total[n - 1] += cnt;
      auto it = cap.find(key);
      if (it != cap.end()) out.matched[n - 1] += std::min(cnt, it->second);
    }
  }
}

double bleu_from_tallies(const BleuTallies& t, int max_n, bool smoothing1) {
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const double total = static_cast<double>(t.total[n - 1]);
    double matched = static_cast<double>(t.matched[n - 1]);
    if (matched == 0.0 && smoothing1) matched = 0.1;
    if (total == 0.0 || matched == 0.0) return 0.0;
    log_sum += std::log(matched / total);
  }
  if (t.cand_len == 0) return 0.0;
  const double bp =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(t.ref_len) /
                                      static_cast<double>(t.cand_len)));
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

void require_nonempty(const Tokens& candidate, const RefSet& references,
                      const char* what) {
  if (candidate.empty()) throw std::invalid_argument(std::string(what) + ": empty candidate");
  if (references.empty()) throw std::invalid_argument(std::string(what) + ": no references");
  for (const Tokens& r : references) {
    if (r.empty()) throw std::invalid_argument(std::string(what) + ": empty reference");
  }
}

int64_t lcs_length(const Tokens& a, const Tokens& b) {
  const size_t m = a.size(), n = b.size();
  std::vector<int64_t> prev(n + 1, 0), cur(n + 1, 0);
  for (size_t i = 1; i <= m; ++i) {
    for (size_t j = 1; j <= n; ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

// TF-IDF vector for one order n, plus its norm.
struct Vec {
  std::map<std::string, double> w;
  double norm = 0.0;
};

Vec tfidf_vec(const CountMap& counts, const CorpusStats& stats) {
  Vec v;
  const double log_nd = std::log(static_cast<double>(stats.num_documents));
  double sq = 0.0;
  for (const auto& [key, cnt] : counts) {
    auto it = stats.document_frequency.find(key);
    const double df = (it == stats.document_frequency.end())
                          ? 1.0
                          : std::max<double>(1.0, static_cast<double>(it->second));
    const double weight = static_cast<double>(cnt) * (log_nd - std::log(df));
    v.w.emplace(key, weight);
    sq += weight * weight;
  }
  v.norm = std::sqrt(sq);
  return v;
}

double cider_sim_n(const Tokens& cand, const Tokens& ref, const CountMap& cc,
                   const CountMap& rc, const CorpusStats& stats) {
  const Vec vc = tfidf_vec(cc, stats);
  const Vec vr = tfidf_vec(rc, stats);
  double sim;
  if (vc.norm == 0.0 || vr.norm == 0.0) {
    // All-zero idf weights (single-document corpora, universal n-grams).
    // Identical non-empty raw counts still deserve full credit.
    sim = (vc.norm == 0.0 && vr.norm == 0.0 && !cc.empty() && cc == rc) ? 1.0 : 0.0;
  } else {
    double num = 0.0;
    for (const auto& [key, wc] : vc.w) {
      auto it = vr.w.find(key);
      if (it != vr.w.end()) num += std::min(wc, it->second) * it->second;
    }
    sim = num / (vc.norm * vr.norm);
  }
  const double delta = static_cast<double>(cand.size()) - static_cast<double>(ref.size());
  return sim * std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
}

}  // namespace

Tokens tokenize_caption(const std::string& text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else if (!std::ispunct(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double bleu(const Tokens& candidate, const RefSet& references, int max_n,
            bool smoothing1) {
  require_nonempty(candidate, references, "bleu");
  if (max_n < 1 || max_n > kMaxN) {
    throw std::invalid_argument("bleu: max_n must be in 1..4");
  }
  BleuTallies t;
  tally_example(candidate, references, t);
  return bleu_from_tallies(t, max_n, smoothing1);
}

double rouge_l(const Tokens& candidate, const RefSet& references) {
  require_nonempty(candidate, references, "rouge_l");
  double best = 0.0;
  for (const Tokens& ref : references) {
    const double lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = kBeta * kBeta;
    const double f = (1.0 + b2) * p * r / (r + b2 * p);
    best = std::max(best, f);
  }
  return best;
}

CorpusStats build_corpus_stats(const std::vector<RefSet>& references) {
  CorpusStats stats;
  stats.num_documents = static_cast<int64_t>(references.size());
  for (const RefSet& refs : references) {
    std::set<std::string> seen;
    for (const Tokens& r : refs) {
      for (int n = 1; n <= kMaxN; ++n) {
        for (const auto& [key, cnt] : ngram_counts(r, n)) {
          (void)cnt;
          seen.insert(key);
        }
      }
    }
    for (const std::string& key : seen) ++stats.document_frequency[key];
  }
  return stats;
}

CiderResult cider_d(const std::vector<Tokens>& candidates,
                    const std::vector<RefSet>& references, const CorpusStats& stats) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("cider_d: candidate/reference count mismatch");
  }
  if (candidates.empty()) throw std::invalid_argument("cider_d: no examples");
  if (stats.num_documents != static_cast<int64_t>(references.size())) {
    throw std::invalid_argument(
        "cider_d: stats built over " + std::to_string(stats.num_documents) +
        " documents but scoring " + std::to_string(references.size()));
  }
  CiderResult result;
  double total = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const Tokens& cand = candidates[i];
    const RefSet& refs = references[i];
    if (refs.empty()) throw std::invalid_argument("cider_d: example without references");
    double per_n_sum = 0.0;
    for (int n = 1; n <= kMaxN; ++n) {
      const CountMap cc = ngram_counts(cand, n);
      double ref_sum = 0.0;
      for (const Tokens& ref : refs) {
        ref_sum += cider_sim_n(cand, ref, cc, ngram_counts(ref, n), stats);
      }
      per_n_sum += ref_sum / static_cast<double>(refs.size());
    }
    const double score = 10.0 * per_n_sum / static_cast<double>(kMaxN);
    result.per_example.push_back(score);
    total += score;
  }
  result.mean = total / static_cast<double>(candidates.size());
  return result;
}

MetricReport evaluate_corpus(const std::string& pred_path, const std::string& ref_path,
                             bool smoothing1) {
  const auto pred_records = read_jsonl(pred_path);
  const auto ref_records = read_jsonl(ref_path);
  if (pred_records.empty()) throw std::runtime_error("evaluate: no predictions in " + pred_path);

  std::map<std::string, RefSet> ref_by_id;
  for (const auto& r : ref_records) {
    if (!r.contains("id") || !r.contains("captions") || !r["captions"].is_array()) {
      throw std::runtime_error("evaluate: reference record needs id + captions[]");
    }
    RefSet refs;
    for (const auto& c : r["captions"]) refs.push_back(tokenize_caption(c.get<std::string>()));
    if (!ref_by_id.emplace(r["id"].get<std::string>(), std::move(refs)).second) {
      throw std::runtime_error("evaluate: duplicate reference id " + r["id"].get<std::string>());
    }
  }

  std::vector<Tokens> cands;
  std::vector<RefSet> refs;
  std::vector<std::string> missing;
  for (const auto& p : pred_records) {
    if (!p.contains("id") || !p.contains("caption")) {
      throw std::runtime_error("evaluate: prediction record needs id + caption");
    }
    const std::string id = p["id"].get<std::string>();
    auto it = ref_by_id.find(id);
    if (it == ref_by_id.end()) {
      missing.push_back(id);
      continue;
    }
    cands.push_back(tokenize_caption(p["caption"].get<std::string>()));
    refs.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string joined = missing[0];
    for (size_t i = 1; i < missing.size(); ++i) joined += ", " + missing[i];
    throw std::runtime_error("evaluate: predictions without references: " + joined);
  }

  MetricReport report;
  report.num_examples = static_cast<int64_t>(cands.size());

  BleuTallies tallies;
  for (size_t i = 0; i < cands.size(); ++i) {
    if (cands[i].empty()) continue;  // zero overlap, zero length
    tally_example(cands[i], refs[i], tallies);
  }
  report.bleu1 = bleu_from_tallies(tallies, 1, smoothing1);
  report.bleu2 = bleu_from_tallies(tallies, 2, smoothing1);
  report.bleu3 = bleu_from_tallies(tallies, 3, smoothing1);
  report.bleu4 = bleu_from_tallies(tallies, 4, smoothing1);

  double rouge_sum = 0.0;
  for (size_t i = 0; i < cands.size(); ++i) {
    if (!cands[i].empty()) rouge_sum += rouge_l(cands[i], refs[i]);
  }
  report.rouge_l = rouge_sum / static_cast<double>(cands.size());

  const CorpusStats stats = build_corpus_stats(refs);
  report.cider_d = cider_d(cands, refs, stats).mean;
  return report;
}

void write_metric_report(const MetricReport& report, const std::string& json_path,
                         const std::string& csv_path) {
  nlohmann::json j;
  j["bleu1"] = report.bleu1;
  j["bleu2"] = report.bleu2;
  j["bleu3"] = report.bleu3;
  j["bleu4"] = report.bleu4;
  j["rouge_l"] = report.rouge_l;
  j["cider_d"] = report.cider_d;
  j["num_examples"] = report.num_examples;
  write_json_file(json_path, j);

  std::ostringstream csv;
  csv << "metric,value\n";
  csv << "bleu1," << report.bleu1 << "\n";
  csv << "bleu2," << report.bleu2 << "\n";
  csv << "bleu3," << report.bleu3 << "\n";
  csv << "bleu4," << report.bleu4 << "\n";
  csv << "rouge_l," << report.rouge_l << "\n";
  csv << "cider_d," << report.cider_d << "\n";
  std::ofstream f(csv_path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + csv_path);
  f << csv.str();
}

}  // namespace mb
