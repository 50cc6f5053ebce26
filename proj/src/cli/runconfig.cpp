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

#include "mb/runconfig.hpp"

#include <functional>
#include <map>
#include <stdexcept>

#include "mb/jsonl.hpp"

namespace mb {

void apply_preset(RunConfig& rc, const std::string& name) {
  if (name == "toy") {
    rc.preset = "toy";
    return;
  }
  if (name == "paper-scale") {
    rc.preset = "paper-scale";
    rc.captioner_lr = 1e-4;
    rc.captioner_warmup = 2000;
    rc.captioner_batch = 128;
    rc.captioner_epochs = 30;
    rc.prefix_len = 40;
    return;
  }
  throw std::invalid_argument("unknown preset '" + name + "' (expected toy or paper-scale)");
}

namespace {

// Single field table driving both directions, so the two stay in sync.
struct FieldBinding {
  std::function<void(const RunConfig&, nlohmann::json&)> dump;
  std::function<void(RunConfig&, const nlohmann::json&)> load;
};

template <class T, class F>
FieldBinding bind_field(F RunConfig::*member) {
  return {[member](const RunConfig& rc, nlohmann::json& out) { out = rc.*member; },
          [member](RunConfig& rc, const nlohmann::json& in) { rc.*member = in.get<T>(); }};
}

const std::map<std::string, FieldBinding>& field_table() {
  static const std::map<std::string, FieldBinding> table = {
      {"seed", bind_field<uint64_t>(&RunConfig::seed)},
      {"preset", bind_field<std::string>(&RunConfig::preset)},
      {"scenes", bind_field<int64_t>(&RunConfig::scenes)},
      {"n_events", bind_field<int>(&RunConfig::n_events)},
      {"audio_dim", bind_field<int>(&RunConfig::audio_dim)},
      {"embed_dim", bind_field<int>(&RunConfig::embed_dim)},
      {"token_dim", bind_field<int>(&RunConfig::token_dim)},
      {"encoder_hidden_dim", bind_field<int>(&RunConfig::encoder_hidden_dim)},
      {"init_temperature", bind_field<double>(&RunConfig::init_temperature)},
      {"jointspace_epochs", bind_field<int>(&RunConfig::jointspace_epochs)},
      {"jointspace_batch", bind_field<int>(&RunConfig::jointspace_batch)},
      {"jointspace_lr", bind_field<double>(&RunConfig::jointspace_lr)},
      {"jointspace_warmup", bind_field<int64_t>(&RunConfig::jointspace_warmup)},
      {"model_dim", bind_field<int>(&RunConfig::model_dim)},
      {"decoder_layers", bind_field<int>(&RunConfig::decoder_layers)},
      {"decoder_heads", bind_field<int>(&RunConfig::decoder_heads)},
      {"max_positions", bind_field<int>(&RunConfig::max_positions)},
      {"ff_mult", bind_field<int>(&RunConfig::ff_mult)},
      {"decoder_epochs", bind_field<int>(&RunConfig::decoder_epochs)},
      {"decoder_batch", bind_field<int>(&RunConfig::decoder_batch)},
      {"decoder_lr", bind_field<double>(&RunConfig::decoder_lr)},
      {"decoder_warmup", bind_field<int64_t>(&RunConfig::decoder_warmup)},
      {"adapter_epochs", bind_field<int>(&RunConfig::adapter_epochs)},
      {"adapter_lr", bind_field<double>(&RunConfig::adapter_lr)},
      {"prefix_len", bind_field<int>(&RunConfig::prefix_len)},
      {"mapper_layers", bind_field<int>(&RunConfig::mapper_layers)},
      {"mapper_heads", bind_field<int>(&RunConfig::mapper_heads)},
      {"captioner_epochs", bind_field<int>(&RunConfig::captioner_epochs)},
      {"captioner_batch", bind_field<int>(&RunConfig::captioner_batch)},
      {"captioner_lr", bind_field<double>(&RunConfig::captioner_lr)},
      {"captioner_warmup", bind_field<int64_t>(&RunConfig::captioner_warmup)},
      {"mode", bind_field<std::string>(&RunConfig::mode)},
      {"bridge", bind_field<std::string>(&RunConfig::bridge)},
      {"noise_std", bind_field<double>(&RunConfig::noise_std)},
      {"beam", bind_field<int>(&RunConfig::beam)},
      {"max_len", bind_field<int>(&RunConfig::max_len)},
      {"gap_samples", bind_field<int>(&RunConfig::gap_samples)},
      {"bleu_smoothing", bind_field<bool>(&RunConfig::bleu_smoothing)},
  };
  return table;
}

}  // namespace

nlohmann::json runconfig_to_json(const RunConfig& rc) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, binding] : field_table()) binding.dump(rc, j[key]);
  return j;
}

void runconfig_merge_json(RunConfig& rc, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  const auto& table = field_table();
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    try {
      it->second.load(rc, value);
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config: bad value for key '" + key + "'");
    }
  }
}

RunConfig runconfig_from_json(const nlohmann::json& j) {
  RunConfig rc;
  runconfig_merge_json(rc, j);
  return rc;
}

RunConfig load_runconfig(const std::string& path) {
  return runconfig_from_json(read_json_file(path));
}

void save_runconfig(const RunConfig& rc, const std::string& path) {
  write_json_file(path, runconfig_to_json(rc));
}

}  // namespace mb
