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

#include "json.hpp"

namespace mb {

// Flat configuration for every pipeline stage. Each run directory receives
// the fully-resolved copy of the struct that produced it. Loading rejects
// unknown keys so a typo cannot silently fall back to a default.
struct RunConfig {
  uint64_t seed = 7;
  std::string preset = "toy";

  // corpus
  int64_t scenes = 2000;
  int n_events = 12;
  int audio_dim = 48;

  // joint space
  int embed_dim = 32;
  int token_dim = 32;
  int encoder_hidden_dim = 64;
  double init_temperature = 14.3;
  int jointspace_epochs = 8;
  int jointspace_batch = 64;
  double jointspace_lr = 1e-3;
  int64_t jointspace_warmup = 100;

  // decoder
  int model_dim = 64;
  int decoder_layers = 2;
  int decoder_heads = 4;
  int max_positions = 64;
  int ff_mult = 4;
  int decoder_epochs = 12;
  int decoder_batch = 16;
  double decoder_lr = 1e-3;
  int64_t decoder_warmup = 100;

  // adapter
  int adapter_epochs = 200;
  double adapter_lr = 1e-2;

  // captioner
  int prefix_len = 8;
  int mapper_layers = 2;
  int mapper_heads = 4;
  int captioner_epochs = 8;
  int captioner_batch = 16;
  double captioner_lr = 1e-3;
  int64_t captioner_warmup = 100;

  // bridge and training mode
  std::string mode = "text-only";  // text-only | audio-text
  std::string bridge = "none";     // none | noise | adapter | adapter+noise
  double noise_std = 0.0;

  // inference and evaluation
  int beam = 5;
  int max_len = 20;
  int gap_samples = 30;
  bool bleu_smoothing = false;
};

// "toy" leaves the defaults; "paper-scale" swaps in the reference training
// constants (captioner lr 1e-4, warmup 2000, batch 128, 30 epochs, prefix
// 40). Unknown names are an error.
void apply_preset(RunConfig& rc, const std::string& name);

nlohmann::json runconfig_to_json(const RunConfig& rc);
RunConfig runconfig_from_json(const nlohmann::json& j);

// Applies only the keys present in j on top of rc; unknown keys are an
// error. Lets a partial config file layer over a preset.
void runconfig_merge_json(RunConfig& rc, const nlohmann::json& j);

RunConfig load_runconfig(const std::string& path);
void save_runconfig(const RunConfig& rc, const std::string& path);

}  // namespace mb
