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

#include "mb/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "mb/digest.hpp"
#include "mb/jsonl.hpp"
#include "mb/kernels.hpp"
#include "mb/metrics.hpp"
#include "mb/rng.hpp"

namespace mb {
namespace {

// Each event contributes one clause per scene. The first two templates are
// the paired bank (audio-paired captions); the last two are withheld for
// the text-only paraphrase pool, and deliberately introduce words the
// paired bank never uses.
struct EventSpec {
  const char* name;
  const char* paired[2];
  const char* para[2];
};

constexpr EventSpec kEvents[] = {
    {"dog",
     {"a dog {barks|yaps} {loudly|sharply}", "a {large|small} dog is barking"},
     {"a hound {bays|howls} {once|twice}", "some hound keeps {woofing|baying}"}},
    {"rain",
     {"rain {falls|patters} on the {roof|window}", "{steady|light} rain is falling"},
     {"a {drizzle|downpour} {taps|drums} outside", "water {drips|streams} from above"}},
    {"engine",
     {"an engine {revs|idles} {nearby|outside}", "a {car|truck} engine is running"},
     {"a motor {rumbles|roars} {briefly|steadily}", "some vehicle {accelerates|sputters} past"}},
    {"bird",
     {"a bird {chirps|sings} in the {tree|distance}", "{several|two} birds are calling"},
     {"a {sparrow|finch} {tweets|trills} {softly|gaily}", "small wings {flutter|flap} about"}},
    {"door",
     {"a door {slams|creaks} {shut|open}", "someone {closes|opens} a door"},
     {"a {hinge|latch} {squeaks|clicks} {loudly|faintly}", "wood {bangs|knocks} on a frame"}},
    {"siren",
     {"a siren {wails|blares} in the {street|distance}", "an {ambulance|alarm} siren sounds"},
     {"an urgent {horn|klaxon} {screams|whoops} past", "emergency {tones|signals} {rise|fade} away"}},
    {"crowd",
     {"a crowd {cheers|murmurs} {loudly|nearby}", "{many|excited} people are talking"},
     {"a {throng|gathering} {claps|chatters} together", "voices {swell|mingle} in a hall"}},
    {"water",
     {"water {splashes|gurgles} in a {sink|stream}", "a {faucet|fountain} is running"},
     {"liquid {sloshes|trickles} {around|nearby}", "a {brook|tap} {babbles|pours} along"}},
    {"music",
     {"music {plays|drifts} from a {radio|room}", "a {piano|guitar} melody is playing"},
     {"a {tune|song} {hums|rings} {softly|faintly}", "notes {float|echo} through the air"}},
    {"wind",
     {"wind {blows|whistles} through the {trees|gap}", "a {strong|gentle} wind is gusting"},
     {"a breeze {rustles|stirs} the {leaves|grass}", "air {whooshes|sweeps} past outside"}},
    {"footsteps",
     {"footsteps {echo|shuffle} on the {floor|stairs}", "someone {walks|runs} past"},
     {"{heels|boots} {clack|thud} {slowly|quickly}", "a person {paces|strides} across a room"}},
    {"thunder",
     {"thunder {rumbles|cracks} in the {distance|sky}", "a {loud|deep} thunderclap strikes"},
     {"a storm {growls|booms} {overhead|far} away", "the sky {grumbles|flashes} after a strike"}},
};

constexpr int kEventBankSize = static_cast<int>(sizeof(kEvents) / sizeof(kEvents[0]));
constexpr const char* kConnectors[] = {"while", "then", "and"};

// Style wrappers. Their vocabulary is disjoint from the event grammar so
// wrapping stays injective and styled words are detectable.
constexpr const char* kNewsPrefix = "breaking news: ";
constexpr const char* kNewsSuffix = ", more at eleven";
constexpr const char* kHumorPrefix[2] = {"folks you will not believe this ",
                                         "witnesses report "};
constexpr const char* kHumorSuffix[2] = {" truly wild stuff", " chaos ensues everywhere"};

// ---- Template machinery --------------------------------------------------

// A template is a word sequence where each word is either fixed or an
// {a|b|...} alternation.
using Template = std::vector<std::vector<std::string>>;

Template parse_template(const std::string& text) {
  Template out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    std::vector<std::string> group;
    if (word.front() == '{' && word.back() == '}') {
      std::string opt;
      for (size_t i = 1; i + 1 < word.size(); ++i) {
        if (word[i] == '|') {
          group.push_back(opt);
          opt.clear();
        } else {
          opt.push_back(word[i]);
        }
      }
      group.push_back(opt);
    } else {
      group.push_back(word);
    }
    out.push_back(std::move(group));
    word.clear();
  };
  for (char c : text) {
    if (c == ' ') {
      flush();
    } else {
      word.push_back(c);
    }
  }
  flush();
  return out;
}

std::string realize(const Template& tpl, RngState& rng) {
  std::string out;
  for (const auto& group : tpl) {
    if (!out.empty()) out.push_back(' ');
    const size_t pick =
        group.size() == 1 ? 0 : static_cast<size_t>(rng.uniform_below(group.size()));
    out += group[pick];
  }
  return out;
}

void enumerate_rec(const Template& tpl, size_t i, std::string& cur,
                   std::vector<std::string>& out) {
  if (i == tpl.size()) {
    out.push_back(cur);
    return;
  }
  const size_t len = cur.size();
  for (const std::string& opt : tpl[i]) {
    if (!cur.empty()) cur.push_back(' ');
    cur += opt;
    enumerate_rec(tpl, i + 1, cur, out);
    cur.resize(len);
  }
}

std::vector<std::string> enumerate_all(const Template& tpl) {
  std::vector<std::string> out;
  std::string cur;
  enumerate_rec(tpl, 0, cur, out);
  return out;
}

std::string clause_for(int event, bool paired_bank, RngState& rng) {
  const auto& bank = paired_bank ? kEvents[event].paired : kEvents[event].para;
  const int pick = static_cast<int>(rng.uniform_below(2));
  return realize(parse_template(bank[pick]), rng);
}

std::string caption_for(const std::vector<int>& events, bool paired_bank, RngState& rng) {
  std::string out;
  for (size_t i = 0; i < events.size(); ++i) {
    if (i > 0) {
      out.push_back(' ');
      out += kConnectors[rng.uniform_below(3)];
      out.push_back(' ');
    }
    out += clause_for(events[i], paired_bank, rng);
  }
  return out;
}

uint64_t hash_string(const std::string& s) {
  uint64_t h = 0x243F6A8885A308D3ull;
  for (unsigned char c : s) h = mix64(h, c);
  return h;
}

std::string scene_id(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06lld", static_cast<long long>(index));
  return std::string(buf);
}

// ---- Generation ----------------------------------------------------------

struct Scene {
  int64_t index = 0;
  std::string id;
  std::vector<int> events;
  std::vector<double> weights;
  double noise_level = 0.0;
  Tensor features{Shape{1}};
  std::string caption;
  std::string split;
};

std::vector<Tensor> draw_prototypes(uint64_t seed, int n_events, int dim) {
  RngState rng(mix64(seed, 0xABCDull));
  std::vector<Tensor> protos;
  const double max_cos = std::cos(10.0 * M_PI / 180.0);
  int attempts = 0;
  while (static_cast<int>(protos.size()) < n_events) {
    if (++attempts > 1000) {
      throw std::runtime_error("generate_corpus: could not draw separated prototypes");
    }
    Tensor p{Shape{dim}};
    double norm2 = 0.0;
    for (auto& v : p.data) {
      const double x = rng.normal();
      v = static_cast<float>(x);
      norm2 += x * x;
    }
    const double norm = std::sqrt(norm2);
    for (auto& v : p.data) v = static_cast<float>(v / norm);
    bool ok = true;
    for (const Tensor& q : protos) {
      const double c = kern::active().dot(p.data.data(), q.data.data(), p.data.size());
      if (std::abs(c) > max_cos) {
        ok = false;
        break;
      }
    }
    if (ok) protos.push_back(std::move(p));
  }
  return protos;
}

void draw_scene_body(Scene& s, const std::vector<Tensor>& protos, int n_events, int dim,
                     RngState& rng) {
  // Multi-event scenes only: single-event scenes collide on their event set
  // so often that retrieval within a split degenerates.
  const double u = rng.next_real();
  const int k = u < 0.45 ? 2 : 3;
  s.events.clear();
  while (static_cast<int>(s.events.size()) < k) {
    const int e = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(n_events)));
    if (std::find(s.events.begin(), s.events.end(), e) == s.events.end()) {
      s.events.push_back(e);
    }
  }
  s.weights.clear();
  for (int i = 0; i < k; ++i) s.weights.push_back(0.45 + 1.15 * rng.next_real());
  s.noise_level = 0.04 + 0.12 * rng.next_real();

  s.features = Tensor{Shape{dim}};
  std::vector<double> acc(static_cast<size_t>(dim), 0.0);
  for (int j = 0; j < k; ++j) {
    const Tensor& p = protos[static_cast<size_t>(s.events[static_cast<size_t>(j)])];
    for (int d = 0; d < dim; ++d) acc[static_cast<size_t>(d)] += s.weights[static_cast<size_t>(j)] * p.data[static_cast<size_t>(d)];
  }
  for (int d = 0; d < dim; ++d) {
    s.features.data[static_cast<size_t>(d)] =
        static_cast<float>(acc[static_cast<size_t>(d)] + rng.normal(0.0, s.noise_level));
  }
  s.caption = caption_for(s.events, true, rng);
}

// Rebuilds weights, features, and caption for a scene whose event list was
// replaced during repair.
void redraw_with_events(Scene& s, const std::vector<Tensor>& protos, int dim,
                        RngState& rng) {
  const size_t k = s.events.size();
  s.weights.clear();
  for (size_t i = 0; i < k; ++i) s.weights.push_back(0.45 + 1.15 * rng.next_real());
  s.noise_level = 0.04 + 0.12 * rng.next_real();
  s.features = Tensor{Shape{dim}};
  std::vector<double> acc(static_cast<size_t>(dim), 0.0);
  for (size_t j = 0; j < k; ++j) {
    const Tensor& p = protos[static_cast<size_t>(s.events[j])];
    for (int d = 0; d < dim; ++d) acc[static_cast<size_t>(d)] += s.weights[j] * p.data[static_cast<size_t>(d)];
  }
  for (int d = 0; d < dim; ++d) {
    s.features.data[static_cast<size_t>(d)] =
        static_cast<float>(acc[static_cast<size_t>(d)] + rng.normal(0.0, s.noise_level));
  }
  s.caption = caption_for(s.events, true, rng);
}

std::vector<std::string> vocab_closure() {
  std::set<std::string> words;
  auto feed = [&](const std::string& text) {
    for (const std::string& w : tokenize_caption(text)) words.insert(w);
  };
  for (const EventSpec& ev : kEvents) {
    for (const char* tpl : ev.paired)
      for (const std::string& r : enumerate_all(parse_template(tpl))) feed(r);
    for (const char* tpl : ev.para)
      for (const std::string& r : enumerate_all(parse_template(tpl))) feed(r);
  }
  for (const char* c : kConnectors) feed(c);
  feed(kNewsPrefix);
  feed(kNewsSuffix);
  for (const char* p : kHumorPrefix) feed(p);
  for (const char* p : kHumorSuffix) feed(p);
  return {words.begin(), words.end()};
}

GeneratedCorpus generate_attempt(const CorpusConfig& config, uint64_t seed) {
  const int dim = config.feature_dim;
  const int64_t n = config.n_scenes;
  std::vector<Tensor> protos = draw_prototypes(seed, config.n_events, dim);

  std::vector<Scene> scenes(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Scene& s = scenes[static_cast<size_t>(i)];
    s.index = i;
    s.id = scene_id(i);
    RngState rng(mix64(seed, static_cast<uint64_t>(i)));
    draw_scene_body(s, protos, config.n_events, dim, rng);
  }

  // 80/10/10 by id hash rank.
  const int64_t n_val = n / 10, n_test = n / 10;
  const int64_t n_train = n - n_val - n_test;
  {
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      const uint64_t ha = hash_string(scenes[static_cast<size_t>(a)].id);
      const uint64_t hb = hash_string(scenes[static_cast<size_t>(b)].id);
      return ha != hb ? ha < hb : a < b;
    });
    for (int64_t r = 0; r < n; ++r) {
      Scene& s = scenes[static_cast<size_t>(order[static_cast<size_t>(r)])];
      s.split = r < n_train ? "train" : (r < n_train + n_val ? "val" : "test");
    }
  }

  // Train-side inventories for the repair passes.
  std::set<std::vector<int>> train_sets;
  std::set<std::string> train_strings;
  for (const Scene& s : scenes) {
    if (s.split != "train") continue;
    std::vector<int> key = s.events;
    std::sort(key.begin(), key.end());
    train_sets.insert(std::move(key));
    train_strings.insert(s.caption);
  }
  std::vector<std::vector<int>> train_set_list(train_sets.begin(), train_sets.end());
  std::vector<std::vector<int>> train_multi_list;
  for (const auto& st : train_set_list) {
    if (st.size() >= 2) train_multi_list.push_back(st);
  }
  if (train_set_list.empty() || train_multi_list.empty()) {
    throw std::runtime_error("generate_corpus: train split too small to anchor val/test");
  }

  // Held-out scenes must describe event sets the captioner saw in
  // training; test realizations must not leak from train verbatim.
  for (Scene& s : scenes) {
    if (s.split == "train") continue;
    RngState rng = RngState(mix64(seed, static_cast<uint64_t>(s.index))).fork(0xF1);

    std::vector<int> key = s.events;
    std::sort(key.begin(), key.end());
    if (train_sets.find(key) == train_sets.end()) {
      const auto& pick =
          train_set_list[static_cast<size_t>(rng.uniform_below(train_set_list.size()))];
      s.events = pick;
      rng.shuffle(s.events);
      redraw_with_events(s, protos, dim, rng);
    }
    if (s.split == "test") {
      int outer = 0;
      while (train_strings.count(s.caption) > 0) {
        bool fixed = false;
        for (int tries = 0; tries < 40; ++tries) {
          s.caption = caption_for(s.events, true, rng);
          if (train_strings.count(s.caption) == 0) {
            fixed = true;
            break;
          }
        }
        if (fixed) break;
        if (++outer > 40) {
          throw std::runtime_error("generate_corpus: cannot deconflict test caption " + s.id);
        }
        const auto& pick =
            train_multi_list[static_cast<size_t>(rng.uniform_below(train_multi_list.size()))];
        s.events = pick;
        rng.shuffle(s.events);
        redraw_with_events(s, protos, dim, rng);
      }
    }
  }

  // Sanity of the synthetic world: features must identify their events.
  int64_t hits = 0;
  for (const Scene& s : scenes) {
    double best = -1e30;
    int best_e = -1;
    const double fnorm = std::sqrt(
        kern::active().dot(s.features.data.data(), s.features.data.data(), s.features.data.size()));
    for (int e = 0; e < config.n_events; ++e) {
      const double c = kern::active().dot(s.features.data.data(),
                                          protos[static_cast<size_t>(e)].data.data(),
                                          s.features.data.size()) /
                       std::max(fnorm, 1e-12);
      if (c > best) {
        best = c;
        best_e = e;
      }
    }
    if (std::find(s.events.begin(), s.events.end(), best_e) != s.events.end()) ++hits;
  }
  const double recall = static_cast<double>(hits) / static_cast<double>(n);

  GeneratedCorpus out;
  out.config = config;
  out.prototypes = std::move(protos);
  out.event_recall = recall;
  out.vocab_words = vocab_closure();
  for (const Scene& s : scenes) {
    CaptionRecord r;
    r.id = s.id;
    r.features.assign(s.features.data.begin(), s.features.data.end());
    r.has_features = true;
    r.caption = s.caption;
    r.split = s.split;
    r.style = "plain";
    r.pool = "paired";
    out.records.push_back(std::move(r));
    out.record_events.push_back(s.events);
  }

  // Multi-reference sets: the realized caption plus alternates from both
  // template banks over the same event sequence.
  for (const Scene& s : scenes) {
    if (s.split == "train") continue;
    RngState rng = RngState(mix64(seed, static_cast<uint64_t>(s.index))).fork(0xFE);
    RefRecord ref;
    ref.id = s.id;
    ref.captions.push_back(s.caption);
    std::set<std::string> seen{s.caption};
    for (int tries = 0; tries < 12 && ref.captions.size() < 4; ++tries) {
      const bool paired_bank = tries % 2 == 0;
      std::string alt = caption_for(s.events, paired_bank, rng);
      if (seen.insert(alt).second) ref.captions.push_back(std::move(alt));
    }
    (s.split == "val" ? out.val_refs : out.test_refs).push_back(std::move(ref));
  }
  return out;
}

}  // namespace

GeneratedCorpus generate_corpus(const CorpusConfig& config) {
  if (config.n_scenes < 10) {
    throw std::invalid_argument("generate_corpus: n_scenes ≥ 10 required");
  }
  if (config.n_events < 1 || config.n_events > kEventBankSize) {
    throw std::invalid_argument("generate_corpus: n_events must be in 1.." +
                                std::to_string(kEventBankSize) +
                                " (template bank size)");
  }
  for (int attempt = 0; attempt < 20; ++attempt) {
    const uint64_t seed = attempt == 0 ? config.seed
                                       : mix64(config.seed, 0xA77E0000ull + attempt);
    GeneratedCorpus c = generate_attempt(config, seed);
    if (c.event_recall > 0.9) return c;
  }
  throw std::runtime_error("generate_corpus: event recall stayed below 90% across reseeds");
}

std::vector<CaptionRecord> paraphrase_pool(const GeneratedCorpus& corpus, uint64_t seed) {
  std::vector<CaptionRecord> out;
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const CaptionRecord& r = corpus.records[i];
    if (r.split != "train" || r.pool != "paired") continue;
    RngState rng(mix64(seed, hash_string(r.id)));
    const int extras = 1 + static_cast<int>(rng.uniform_below(2));
    std::set<std::string> seen{r.caption};
    for (int e = 0; e < extras; ++e) {
      std::string text;
      for (int tries = 0; tries < 8; ++tries) {
        text = caption_for(corpus.record_events[i], false, rng);
        if (seen.insert(text).second) break;
        text.clear();
      }
      if (text.empty()) continue;
      CaptionRecord extra;
      extra.id = r.id + "_p" + std::to_string(e);
      extra.has_features = false;
      extra.caption = std::move(text);
      extra.split = "train";
      extra.style = "plain";
      extra.pool = "text-only-extra";
      out.push_back(std::move(extra));
    }
  }
  return out;
}

std::string stylize(const std::string& caption, int style_id, uint64_t seed) {
  switch (style_id) {
    case 0:
      return std::string(kNewsPrefix) + caption + kNewsSuffix;
    case 1: {
      const uint64_t pick = mix64(seed, hash_string(caption)) % 2;
      return std::string(kHumorPrefix[pick]) + caption + kHumorSuffix[pick];
    }
    default:
      throw std::invalid_argument("stylize: unknown style id " + std::to_string(style_id) +
                                  " (0 news, 1 humorous)");
  }
}

int style_id_by_name(const std::string& name) {
  if (name == "news") return 0;
  if (name == "humorous") return 1;
  throw std::invalid_argument("unknown style '" + name + "' (news, humorous)");
}

int Vocab::id(const std::string& word) const {
  auto it = index.find(word);
  if (it == index.end()) {
    throw std::runtime_error("vocab: unknown word '" + word + "'");
  }
  return it->second;
}

std::vector<int> Vocab::encode(const std::string& caption) const {
  std::vector<int> out;
  for (const std::string& w : tokenize_caption(caption)) out.push_back(id(w));
  return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    if (i == kPad || i == kBos || i == kEos) continue;
    if (i < 0 || i >= size()) {
      throw std::runtime_error("vocab: id " + std::to_string(i) + " out of range");
    }
    if (!out.empty()) out.push_back(' ');
    out += tokens[static_cast<size_t>(i)];
  }
  return out;
}

Vocab make_vocab(const std::vector<std::string>& words) {
  Vocab v;
  v.tokens = {"<pad>", "<bos>", "<eos>"};
  v.tokens.insert(v.tokens.end(), words.begin(), words.end());
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    if (!v.index.emplace(v.tokens[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("make_vocab: duplicate word '" + v.tokens[i] + "'");
    }
  }
  return v;
}

Vocab load_vocab(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  if (!j.contains("tokens") || !j["tokens"].is_array()) {
    throw std::runtime_error(path + ": vocab needs a tokens array");
  }
  std::vector<std::string> tokens = j["tokens"].get<std::vector<std::string>>();
  if (tokens.size() < 4 || tokens[0] != "<pad>" || tokens[1] != "<bos>" ||
      tokens[2] != "<eos>") {
    throw std::runtime_error(path + ": vocab must start with <pad>, <bos>, <eos>");
  }
  return make_vocab({tokens.begin() + 3, tokens.end()});
}

namespace {

nlohmann::json record_to_json(const CaptionRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  if (r.has_features) j["features"] = r.features;
  j["caption"] = r.caption;
  j["split"] = r.split;
  j["style"] = r.style;
  j["pool"] = r.pool;
  return j;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace

void write_corpus(const GeneratedCorpus& corpus, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  std::vector<nlohmann::json> train, val, test;
  for (const CaptionRecord& r : corpus.records) {
    (r.split == "train" ? train : (r.split == "val" ? val : test))
        .push_back(record_to_json(r));
  }
  const auto pool = paraphrase_pool(corpus, mix64(corpus.config.seed, 0x9001ull));
  std::vector<nlohmann::json> extra;
  for (const CaptionRecord& r : pool) extra.push_back(record_to_json(r));

  const auto refs_to_json = [](const std::vector<RefRecord>& refs) {
    std::vector<nlohmann::json> out;
    for (const RefRecord& r : refs) {
      nlohmann::json j;
      j["id"] = r.id;
      j["captions"] = r.captions;
      out.push_back(std::move(j));
    }
    return out;
  };

  write_jsonl(path("train.jsonl"), train);
  write_jsonl(path("val.jsonl"), val);
  write_jsonl(path("test.jsonl"), test);
  write_jsonl(path("train_extra.jsonl"), extra);
  write_jsonl(path("val_refs.jsonl"), refs_to_json(corpus.val_refs));
  write_jsonl(path("test_refs.jsonl"), refs_to_json(corpus.test_refs));

  const Vocab vocab = make_vocab(corpus.vocab_words);
  {
    nlohmann::json j;
    j["tokens"] = vocab.tokens;
    write_json_file(path("vocab.json"), j);
  }

  nlohmann::json manifest;
  manifest["config"] = {{"seed", corpus.config.seed},
                        {"n_scenes", corpus.config.n_scenes},
                        {"n_events", corpus.config.n_events},
                        {"feature_dim", corpus.config.feature_dim}};
  manifest["counts"] = {{"train", train.size()},
                        {"val", val.size()},
                        {"test", test.size()},
                        {"train_extra", extra.size()}};
  manifest["vocab_size"] = vocab.size();
  manifest["event_recall"] = corpus.event_recall;
  nlohmann::json files;
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl", "train_extra.jsonl",
                           "val_refs.jsonl", "test_refs.jsonl", "vocab.json"}) {
    files[name] = sha256_file(path(name));
  }
  manifest["files"] = files;
  manifest["generated_at"] = utc_now();  // excluded from idempotence checks
  write_json_file(path("manifest.json"), manifest);
}

std::vector<CaptionRecord> load_records(const std::string& path) {
  const auto lines = read_jsonl(path);
  std::vector<CaptionRecord> out;
  for (size_t i = 0; i < lines.size(); ++i) {
    const auto& j = lines[i];
    const auto fail = [&](const std::string& field) {
      throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                               ": missing or invalid field '" + field + "'");
    };
    CaptionRecord r;
    if (!j.contains("id") || !j["id"].is_string()) fail("id");
    if (!j.contains("caption") || !j["caption"].is_string()) fail("caption");
    if (!j.contains("split") || !j["split"].is_string()) fail("split");
    if (!j.contains("style") || !j["style"].is_string()) fail("style");
    if (!j.contains("pool") || !j["pool"].is_string()) fail("pool");
    r.id = j["id"].get<std::string>();
    r.caption = j["caption"].get<std::string>();
    r.split = j["split"].get<std::string>();
    r.style = j["style"].get<std::string>();
    r.pool = j["pool"].get<std::string>();
    if (j.contains("features")) {
      if (!j["features"].is_array()) fail("features");
      r.features = j["features"].get<std::vector<float>>();
      r.has_features = true;
    } else {
      r.has_features = false;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RefRecord> load_refs(const std::string& path) {
  const auto lines = read_jsonl(path);
  std::vector<RefRecord> out;
  for (size_t i = 0; i < lines.size(); ++i) {
    const auto& j = lines[i];
    if (!j.contains("id") || !j["id"].is_string() || !j.contains("captions") ||
        !j["captions"].is_array()) {
      throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                               ": reference record needs id + captions[]");
    }
    out.push_back({j["id"].get<std::string>(),
                   j["captions"].get<std::vector<std::string>>()});
  }
  return out;
}

}  // namespace mb
