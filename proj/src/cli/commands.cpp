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

#include "mb/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "mb/checkpoint.hpp"
#include "mb/digest.hpp"
#include "mb/jsonl.hpp"
#include "mb/metrics.hpp"

namespace mb {

namespace {

constexpr uint64_t kEncoderInitTag = 0xE4C0DE;
constexpr uint64_t kDecoderInitTag = 0xDEC0DE;
constexpr uint64_t kMapperInitTag = 0x3A99E0;

std::string joined(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

// key,value log for commands that have no epoch loop.
void write_kv_log(const std::string& dir, const std::vector<std::pair<std::string, double>>& kv) {
  std::string text = "key,value\n";
  for (const auto& [k, v] : kv) text += k + "," + num(v) + "\n";
  write_text_file(joined(dir, "log.csv"), text);
}

void write_stage_outputs(const std::string& dir, const RunConfig& rc,
                         const std::vector<std::string>& files, const nlohmann::json& extra) {
  save_runconfig(rc, joined(dir, "config.json"));
  std::vector<std::string> manifest_files = files;
  manifest_files.push_back("config.json");
  manifest_files.push_back("log.csv");
  write_manifest(dir, manifest_files, extra);
}

}  // namespace

CorpusData load_corpus_dir(const std::string& dir) {
  CorpusData data;
  data.train = load_records(joined(dir, "train.jsonl"));
  data.val = load_records(joined(dir, "val.jsonl"));
  data.test = load_records(joined(dir, "test.jsonl"));
  data.val_refs = load_refs(joined(dir, "val_refs.jsonl"));
  data.test_refs = load_refs(joined(dir, "test_refs.jsonl"));
  data.vocab = load_vocab(joined(dir, "vocab.json"));
  return data;
}

EncoderConfig encoder_config_from(const RunConfig& rc, int vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.token_dim = rc.token_dim;
  c.embed_dim = rc.embed_dim;
  c.audio_dim = rc.audio_dim;
  c.hidden_dim = rc.encoder_hidden_dim;
  c.init_temperature = rc.init_temperature;
  return c;
}

DecoderConfig decoder_config_from(const RunConfig& rc, int vocab_size) {
  DecoderConfig c;
  c.vocab_size = vocab_size;
  c.model_dim = rc.model_dim;
  c.n_layers = rc.decoder_layers;
  c.n_heads = rc.decoder_heads;
  c.max_positions = rc.max_positions;
  c.ff_mult = rc.ff_mult;
  return c;
}

MapperConfig mapper_config_from(const RunConfig& rc) {
  MapperConfig c;
  c.input_dim = rc.embed_dim;
  c.prefix_len = rc.prefix_len;
  c.model_dim = rc.model_dim;
  c.n_layers = rc.mapper_layers;
  c.n_heads = rc.mapper_heads;
  c.ff_mult = rc.ff_mult;
  return c;
}

DualEncoder make_encoder(const RunConfig& rc, int vocab_size) {
  return DualEncoder(encoder_config_from(rc, vocab_size), mix64(rc.seed, kEncoderInitTag));
}

DecoderLM make_decoder(const RunConfig& rc, int vocab_size) {
  return DecoderLM(decoder_config_from(rc, vocab_size), mix64(rc.seed, kDecoderInitTag));
}

MappingNetwork make_mapper(const RunConfig& rc) {
  return MappingNetwork(mapper_config_from(rc), mix64(rc.seed, kMapperInitTag));
}

DualEncoder load_encoder(const RunConfig& rc, const std::string& ckpt, int vocab_size) {
  DualEncoder enc = make_encoder(rc, vocab_size);
  load_params(ckpt, enc.parameters());
  return enc;
}

DecoderLM load_decoder(const RunConfig& rc, const std::string& ckpt, int vocab_size) {
  DecoderLM dec = make_decoder(rc, vocab_size);
  load_params(ckpt, dec.parameters());
  return dec;
}

MappingNetwork load_mapper(const RunConfig& rc, const std::string& ckpt) {
  MappingNetwork mapper = make_mapper(rc);
  load_params(ckpt, mapper.parameters());
  return mapper;
}

LinearAdapter load_adapter(const RunConfig& rc, const std::string& ckpt) {
  LinearAdapter adapter(rc.embed_dim);
  load_params(ckpt, adapter.parameters());
  return adapter;
}

RngState gap_sampling_rng(uint64_t seed) { return RngState(seed).fork(0xE5); }

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_manifest(const std::string& dir, const std::vector<std::string>& files,
                    const nlohmann::json& extra) {
  nlohmann::json m = extra;
  nlohmann::json f = nlohmann::json::object();
  for (const auto& name : files) f[name] = sha256_file(joined(dir, name));
  m["files"] = f;
  write_json_file(joined(dir, "manifest.json"), m);
}

std::string format_epoch_log_csv(const std::vector<EpochLog>& rows) {
  std::string text = "epoch,loss,lr\n";
  for (const auto& r : rows)
    text += std::to_string(r.epoch) + "," + num(r.loss) + "," + num(r.lr) + "\n";
  return text;
}

// ---- generate ------------------------------------------------------------

int cmd_generate(const GenerateArgs& args) {
  CorpusConfig cc;
  cc.seed = args.rc.seed;
  cc.n_scenes = args.rc.scenes;
  cc.n_events = args.rc.n_events;
  cc.feature_dim = args.rc.audio_dim;
  const GeneratedCorpus corpus = generate_corpus(cc);
  write_corpus(corpus, args.out);
  save_runconfig(args.rc, joined(args.out, "config.json"));
  write_kv_log(args.out, {{"scenes", static_cast<double>(cc.n_scenes)},
                          {"vocab_size", static_cast<double>(corpus.vocab_words.size() + 3)},
                          {"event_recall", corpus.event_recall}});
  std::printf("generate: %lld scenes, event_recall=%s -> %s\n",
              static_cast<long long>(cc.n_scenes), num(corpus.event_recall).c_str(),
              args.out.c_str());
  return 0;
}

// ---- train-jointspace ----------------------------------------------------

int cmd_train_jointspace(const TrainJointspaceArgs& args) {
  const CorpusData data = load_corpus_dir(args.corpus);
  const auto train_pairs = pairs_from_records(data.train, data.vocab);
  DualEncoder enc = make_encoder(args.rc, data.vocab.size());

  JointspaceTrainConfig tc;
  tc.epochs = args.rc.jointspace_epochs;
  tc.batch_size = args.rc.jointspace_batch;
  tc.lr = args.rc.jointspace_lr;
  tc.warmup_steps = args.rc.jointspace_warmup;
  tc.seed = args.rc.seed;
  const auto log = train_jointspace(enc, train_pairs, tc);

  ensure_dir(args.out);
  save_params(joined(args.out, "encoder.ckpt"), enc.parameters());
  write_text_file(joined(args.out, "log.csv"), format_epoch_log_csv(log));

  const auto val_pairs = encode_pairs(enc, pairs_from_records(data.val, data.vocab));
  const double recall = retrieval_recall_at1(val_pairs);
  const GapStats gap = gap_stats(val_pairs);
  nlohmann::json extra;
  extra["val_recall_at1"] = recall;
  extra["val_centroid_distance"] = gap.centroid_distance;
  extra["val_mean_pair_linf"] = gap.mean_pair_linf;
  extra["val_mean_pair_cosine"] = gap.mean_pair_cosine;
  write_stage_outputs(args.out, args.rc, {"encoder.ckpt"}, extra);
  std::printf("train-jointspace: %zu pairs, val_recall_at1=%s -> %s\n", train_pairs.size(),
              num(recall).c_str(), args.out.c_str());
  return 0;
}

// ---- pretrain-decoder ----------------------------------------------------

namespace {

std::vector<std::vector<int>> caption_tokens(const std::vector<CaptionRecord>& records,
                                             const Vocab& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(vocab.encode(rec.caption));
  return out;
}

}  // namespace

int cmd_pretrain_decoder(const PretrainDecoderArgs& args) {
  const CorpusData data = load_corpus_dir(args.corpus);
  const auto train_caps = caption_tokens(data.train, data.vocab);
  DecoderLM dec = make_decoder(args.rc, data.vocab.size());

  DecoderPretrainConfig pc;
  pc.epochs = args.rc.decoder_epochs;
  pc.batch_size = args.rc.decoder_batch;
  pc.lr = args.rc.decoder_lr;
  pc.warmup_steps = args.rc.decoder_warmup;
  pc.seed = args.rc.seed;
  const auto log = pretrain_decoder(dec, train_caps, pc);

  ensure_dir(args.out);
  save_params(joined(args.out, "decoder.ckpt"), dec.parameters());
  write_text_file(joined(args.out, "log.csv"), format_epoch_log_csv(
      [&] {
        std::vector<EpochLog> rows;
        for (const auto& r : log) rows.push_back({r.epoch, r.loss, r.lr});
        return rows;
      }()));

  const double ppl = decoder_perplexity(dec, caption_tokens(data.val, data.vocab));
  nlohmann::json extra;
  extra["val_perplexity"] = ppl;
  extra["vocab_size"] = data.vocab.size();
  write_stage_outputs(args.out, args.rc, {"decoder.ckpt"}, extra);
  std::printf("pretrain-decoder: val_perplexity=%s (vocab %d) -> %s\n", num(ppl).c_str(),
              data.vocab.size(), args.out.c_str());
  return 0;
}

// ---- train-adapter -------------------------------------------------------

int cmd_train_adapter(const TrainAdapterArgs& args) {
  const CorpusData data = load_corpus_dir(args.corpus);
  DualEncoder enc = load_encoder(args.rc, args.encoder, data.vocab.size());
  const auto train_emb = encode_pairs(enc, pairs_from_records(data.train, data.vocab));
  const auto val_emb = encode_pairs(enc, pairs_from_records(data.val, data.vocab));

  LinearAdapter adapter(args.rc.embed_dim);
  AdapterTrainConfig ac;
  ac.epochs = args.rc.adapter_epochs;
  ac.lr = args.rc.adapter_lr;
  ac.seed = args.rc.seed;
  std::vector<EpochLog> log;
  const double final_mse = train_adapter(adapter, train_emb, ac, &log);

  ensure_dir(args.out);
  save_params(joined(args.out, "adapter.ckpt"), adapter.parameters());
  write_text_file(joined(args.out, "log.csv"), format_epoch_log_csv(log));
  nlohmann::json extra;
  extra["final_train_mse"] = final_mse;
  extra["val_mse"] = adapter_mse(adapter, val_emb);
  extra["val_gap_mse"] = embedding_gap_mse(val_emb);
  write_stage_outputs(args.out, args.rc, {"adapter.ckpt"}, extra);
  std::printf("train-adapter: train_mse=%s val_mse=%s baseline=%s -> %s\n",
              num(final_mse).c_str(), num(extra["val_mse"].get<double>()).c_str(),
              num(extra["val_gap_mse"].get<double>()).c_str(), args.out.c_str());
  return 0;
}

// ---- estimate-gap --------------------------------------------------------

int cmd_estimate_gap(const EstimateGapArgs& args) {
  const CorpusData data = load_corpus_dir(args.corpus);
  DualEncoder enc = load_encoder(args.rc, args.encoder, data.vocab.size());
  const auto pairs = encode_pairs(enc, pairs_from_records(data.train, data.vocab));

  RngState rng = gap_sampling_rng(args.rc.seed);
  const double eps = estimate_noise_std(pairs, args.rc.gap_samples, rng);
  const GapStats stats = gap_stats(pairs);

  ensure_dir(args.out);
  nlohmann::json gap;
  gap["epsilon_hat"] = eps;
  gap["samples"] = args.rc.gap_samples;
  gap["seed"] = args.rc.seed;
  gap["centroid_distance"] = stats.centroid_distance;
  gap["mean_pair_linf"] = stats.mean_pair_linf;
  gap["mean_pair_cosine"] = stats.mean_pair_cosine;
  write_json_file(joined(args.out, "gap.json"), gap);
  write_kv_log(args.out, {{"epsilon_hat", eps},
                          {"samples", static_cast<double>(args.rc.gap_samples)},
                          {"mean_pair_linf", stats.mean_pair_linf}});
  save_runconfig(args.rc, joined(args.out, "config.json"));
  write_manifest(args.out, {"gap.json", "config.json", "log.csv"}, nlohmann::json::object());
  std::printf("epsilon_hat=%s\n", num(eps).c_str());
  return 0;
}

// ---- train-captioner -----------------------------------------------------

int cmd_train_captioner(const TrainCaptionerArgs& args) {
  const RunConfig& rc = args.rc;
  const CaptionMode mode = caption_mode_from_name(rc.mode);
  const std::string& bridge = rc.bridge;
  if (bridge != "none" && bridge != "noise" && bridge != "adapter" && bridge != "adapter+noise")
    throw std::invalid_argument("unknown bridge '" + bridge +
                                "' (expected none, noise, adapter, adapter+noise)");
  if (mode == CaptionMode::kAudioText && bridge != "none")
    throw std::invalid_argument("audio-text mode does not take a bridge (remove --bridge)");
  const bool want_noise = bridge == "noise" || bridge == "adapter+noise";
  const bool want_adapter = bridge == "adapter" || bridge == "adapter+noise";
  if (want_adapter && args.adapter.empty())
    throw std::invalid_argument("bridge '" + bridge + "' requires --adapter");
  if (want_noise && rc.noise_std < 0.0)
    throw std::invalid_argument("noise_std must be non-negative");

  const CorpusData data = load_corpus_dir(args.corpus);
  DualEncoder enc = load_encoder(rc, args.encoder, data.vocab.size());
  DecoderLM dec = load_decoder(rc, args.decoder, data.vocab.size());
  LinearAdapter adapter(rc.embed_dim);
  if (want_adapter) adapter = load_adapter(rc, args.adapter);

  std::vector<CaptionRecord> train_records = data.train;
  if (!args.style.empty()) {
    const int style_id = style_id_by_name(args.style);
    for (auto& rec : train_records) rec.caption = stylize(rec.caption, style_id, rc.seed);
  }
  auto examples = examples_from_records(train_records, data.vocab, mode);
  if (!args.extra.empty()) {
    if (mode != CaptionMode::kTextOnly)
      throw std::invalid_argument("--extra pool applies to text-only mode only");
    auto extra_records = load_records(args.extra);
    if (!args.style.empty()) {
      const int style_id = style_id_by_name(args.style);
      for (auto& rec : extra_records) rec.caption = stylize(rec.caption, style_id, rc.seed);
    }
    auto extra_examples = examples_from_records(extra_records, data.vocab, mode);
    examples.insert(examples.end(), extra_examples.begin(), extra_examples.end());
  }

  MappingNetwork mapper = make_mapper(rc);
  CaptionerTrainConfig tc;
  tc.epochs = rc.captioner_epochs;
  tc.batch_size = rc.captioner_batch;
  tc.lr = rc.captioner_lr;
  tc.warmup_steps = rc.captioner_warmup;
  tc.seed = rc.seed;
  const NoiseConfig noise{rc.noise_std};
  const auto log = train_captioner(mode, mapper, dec, enc, want_adapter ? &adapter : nullptr,
                                   want_noise ? &noise : nullptr, examples, tc);

  ensure_dir(args.out);
  save_params(joined(args.out, "mapper.ckpt"), mapper.parameters());
  write_text_file(joined(args.out, "log.csv"), format_epoch_log_csv(
      [&] {
        std::vector<EpochLog> rows;
        for (const auto& r : log) rows.push_back({r.epoch, r.loss, r.lr});
        return rows;
      }()));
  nlohmann::json extra;
  extra["mode"] = rc.mode;
  extra["bridge"] = bridge;
  extra["noise_std"] = rc.noise_std;
  extra["num_examples"] = examples.size();
  extra["style"] = args.style;
  if (!log.empty()) {
    extra["initial_loss"] = log.front().loss;
    extra["final_loss"] = log.back().loss;
  }
  extra["encoder_ckpt_sha256"] = sha256_file(args.encoder);
  extra["decoder_ckpt_sha256"] = sha256_file(args.decoder);
  write_stage_outputs(args.out, rc, {"mapper.ckpt"}, extra);
  std::printf("train-captioner: %s/%s, %zu examples, loss %s -> %s\n", rc.mode.c_str(),
              bridge.c_str(), examples.size(),
              log.empty() ? "n/a" : num(log.back().loss).c_str(), args.out.c_str());
  return 0;
}

// ---- infer ---------------------------------------------------------------

int cmd_infer(const InferArgs& args) {
  const Vocab vocab = load_vocab(joined(args.corpus, "vocab.json"));
  DualEncoder enc = load_encoder(args.rc, args.encoder, vocab.size());
  DecoderLM dec = load_decoder(args.rc, args.decoder, vocab.size());
  MappingNetwork mapper = load_mapper(args.rc, args.mapper);
  const auto records = load_records(args.input);

  std::vector<nlohmann::json> out_records;
  out_records.reserve(records.size());
  for (const auto& rec : records) {
    if (!rec.has_features)
      throw std::invalid_argument("inference needs audio features, record " + rec.id +
                                  " has none");
    Tensor features(Shape{static_cast<int64_t>(rec.features.size())});
    std::copy(rec.features.begin(), rec.features.end(), features.data.begin());
    const InferResult res =
        infer_caption(mapper, dec, enc, features, vocab, args.rc.beam, args.rc.max_len);
    nlohmann::json j;
    j["id"] = rec.id;
    j["caption"] = res.caption;
    out_records.push_back(std::move(j));
  }

  ensure_dir(args.out);
  write_jsonl(joined(args.out, "predictions.jsonl"), out_records);
  write_kv_log(args.out, {{"num_examples", static_cast<double>(out_records.size())},
                          {"beam", static_cast<double>(args.rc.beam)}});
  save_runconfig(args.rc, joined(args.out, "config.json"));
  write_manifest(args.out, {"predictions.jsonl", "config.json", "log.csv"},
                 nlohmann::json::object());
  std::printf("infer: %zu captions (beam %d) -> %s\n", out_records.size(), args.rc.beam,
              args.out.c_str());
  return 0;
}

// ---- evaluate ------------------------------------------------------------

int cmd_evaluate(const EvaluateArgs& args) {
  const MetricReport report = evaluate_corpus(args.pred, args.ref, args.rc.bleu_smoothing);
  ensure_dir(args.out);
  write_metric_report(report, joined(args.out, "metrics.json"), joined(args.out, "metrics.csv"));
  write_kv_log(args.out, {{"num_examples", static_cast<double>(report.num_examples)}});
  save_runconfig(args.rc, joined(args.out, "config.json"));
  write_manifest(args.out, {"metrics.json", "metrics.csv", "config.json", "log.csv"},
                 nlohmann::json::object());
  std::printf("evaluate: bleu1=%s bleu4=%s rouge_l=%s cider_d=%s (n=%lld)\n",
              num(report.bleu1).c_str(), num(report.bleu4).c_str(), num(report.rouge_l).c_str(),
              num(report.cider_d).c_str(), static_cast<long long>(report.num_examples));
  return 0;
}

// ---- verify --------------------------------------------------------------

int cmd_verify(const VerifyArgs& args) {
  const nlohmann::json manifest = read_json_file(joined(args.dir, "manifest.json"));
  if (!manifest.contains("files") || !manifest["files"].is_object())
    throw std::runtime_error("verify: manifest has no files table: " + args.dir);
  int checked = 0;
  for (const auto& [name, expect] : manifest["files"].items()) {
    const std::string actual = sha256_file(joined(args.dir, name));
    if (actual != expect.get<std::string>())
      throw std::runtime_error("verify: hash mismatch for " + name + " in " + args.dir);
    ++checked;
  }
  std::printf("verify: OK (%d files)\n", checked);
  return 0;
}

}  // namespace mb
