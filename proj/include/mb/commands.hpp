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

#include <string>
#include <vector>

#include "mb/bridge.hpp"
#include "mb/captioner.hpp"
#include "mb/corpus.hpp"
#include "mb/decoder.hpp"
#include "mb/jointspace.hpp"
#include "mb/mapper.hpp"
#include "mb/runconfig.hpp"

namespace mb {

// ---- Shared plumbing -----------------------------------------------------

struct CorpusData {
  std::vector<CaptionRecord> train, val, test;
  std::vector<RefRecord> val_refs, test_refs;
  Vocab vocab;
};

CorpusData load_corpus_dir(const std::string& dir);

EncoderConfig encoder_config_from(const RunConfig& rc, int vocab_size);
DecoderConfig decoder_config_from(const RunConfig& rc, int vocab_size);
MapperConfig mapper_config_from(const RunConfig& rc);

// Fresh models with stage-specific init streams derived from rc.seed.
DualEncoder make_encoder(const RunConfig& rc, int vocab_size);
DecoderLM make_decoder(const RunConfig& rc, int vocab_size);
MappingNetwork make_mapper(const RunConfig& rc);

DualEncoder load_encoder(const RunConfig& rc, const std::string& ckpt, int vocab_size);
DecoderLM load_decoder(const RunConfig& rc, const std::string& ckpt, int vocab_size);
MappingNetwork load_mapper(const RunConfig& rc, const std::string& ckpt);
LinearAdapter load_adapter(const RunConfig& rc, const std::string& ckpt);

// Sampling stream for the gap estimator: fork(0xE5) of the run seed. The
// CLI and any cross-check must derive it identically.
RngState gap_sampling_rng(uint64_t seed);

void ensure_dir(const std::string& dir);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// manifest.json: {"files": {name: sha256}, ...extra}. Files are named
// relative to dir.
void write_manifest(const std::string& dir, const std::vector<std::string>& files,
                    const nlohmann::json& extra);

std::string format_epoch_log_csv(const std::vector<EpochLog>& rows);

// ---- Commands ------------------------------------------------------------
//
// Each returns the process exit code (0 on success) and throws on invalid
// input; main() turns exceptions into a single-line error on stderr.

struct GenerateArgs {
  RunConfig rc;
  std::string out;
};
int cmd_generate(const GenerateArgs& args);

struct TrainJointspaceArgs {
  RunConfig rc;
  std::string corpus, out;
};
int cmd_train_jointspace(const TrainJointspaceArgs& args);

struct PretrainDecoderArgs {
  RunConfig rc;
  std::string corpus, out;
};
int cmd_pretrain_decoder(const PretrainDecoderArgs& args);

struct TrainAdapterArgs {
  RunConfig rc;
  std::string corpus, encoder, out;
};
int cmd_train_adapter(const TrainAdapterArgs& args);

struct EstimateGapArgs {
  RunConfig rc;
  std::string corpus, encoder, out;
};
int cmd_estimate_gap(const EstimateGapArgs& args);

struct TrainCaptionerArgs {
  RunConfig rc;               // rc.mode, rc.bridge, rc.noise_std select the data path
  std::string corpus, encoder, decoder, out;
  std::string adapter;        // checkpoint, required for adapter bridges
  std::string extra;          // optional text-only pool JSONL appended to train
  std::string style;          // optional style name applied to training captions
};
int cmd_train_captioner(const TrainCaptionerArgs& args);

struct InferArgs {
  RunConfig rc;
  std::string corpus, encoder, decoder, mapper, input, out;
};
int cmd_infer(const InferArgs& args);

struct EvaluateArgs {
  RunConfig rc;
  std::string pred, ref, out;
};
int cmd_evaluate(const EvaluateArgs& args);

struct VerifyArgs {
  std::string dir;
};
int cmd_verify(const VerifyArgs& args);

// One noise-sweep grid point: captioner at rc.noise_std, inference on the
// test split, evaluation against the test references, point.json summary.
struct SweepPointArgs {
  RunConfig rc;
  std::string corpus, encoder, decoder, out;
};
int cmd_sweep_point(const SweepPointArgs& args);

struct SweepNoiseArgs {
  RunConfig rc;
  std::string corpus, encoder, decoder, out;
  std::string stds = "0,0.005,0.01,0.015,0.05,0.1,0.5,1.0";
  int jobs = 1;
  bool gnuplot = false;
};
int cmd_sweep_noise(const SweepNoiseArgs& args);

struct ExperimentArgs {
  RunConfig rc;
  std::string name, out;
};
int cmd_experiment(const ExperimentArgs& args);

}  // namespace mb
