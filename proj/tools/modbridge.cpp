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

#include <algorithm>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mb/commands.hpp"
#include "mb/jsonl.hpp"

namespace {

// Per-subcommand RunConfig resolution. Precedence, weakest first: struct
// defaults, --preset, --config, MB_SEED, explicit flags.
struct RcFlags {
  CLI::Option* preset_opt = nullptr;
  CLI::Option* config_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  std::string preset_v, config_v;
  uint64_t seed_v = 0;
  std::vector<std::function<void(mb::RunConfig&)>> appliers;

  void add_common(CLI::App* cmd) {
    preset_opt = cmd->add_option("--preset", preset_v, "config preset (toy, paper-scale)");
    config_opt = cmd->add_option("--config", config_v, "JSON config file layered over the preset");
    seed_opt = cmd->add_option("--seed", seed_v, "run seed")->envname("MB_SEED");
  }

  template <class T>
  void add(CLI::App* cmd, const std::string& flag, T mb::RunConfig::*member, const std::string& help) {
    auto staging = std::make_shared<T>();
    CLI::Option* opt = cmd->add_option(flag, *staging, help);
    appliers.push_back([opt, staging, member](mb::RunConfig& rc) {
      if (opt->count() > 0) rc.*member = *staging;
    });
  }

  void add_flag(CLI::App* cmd, const std::string& flag, bool mb::RunConfig::*member,
                const std::string& help) {
    auto staging = std::make_shared<bool>(false);
    CLI::Option* opt = cmd->add_flag(flag, *staging, help);
    appliers.push_back([opt, staging, member](mb::RunConfig& rc) {
      if (opt->count() > 0) rc.*member = *staging;
    });
  }

  mb::RunConfig resolve() const {
    mb::RunConfig rc;
    if (preset_opt->count() > 0) mb::apply_preset(rc, preset_v);
    if (config_opt->count() > 0) mb::runconfig_merge_json(rc, mb::read_json_file(config_v));
    if (seed_opt->count() > 0) rc.seed = seed_v;  // env-sourced values count too
    for (const auto& apply : appliers) apply(rc);
    return rc;
  }
};

std::string single_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  while (!text.empty() && text.back() == ' ') text.pop_back();
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modbridge: trains a caption decoder on text alone and swaps in the audio "
               "encoder at inference"};
  app.require_subcommand(1);
  int code = 0;

  // Keeps every subcommand's state alive until parse() runs the callback.
  std::vector<std::shared_ptr<RcFlags>> all_flags;
  auto flags_for = [&](CLI::App* cmd) {
    auto f = std::make_shared<RcFlags>();
    f->add_common(cmd);
    all_flags.push_back(f);
    return f;
  };

  {
    auto* cmd = app.add_subcommand("generate", "synthesize the caption corpus");
    auto flags = flags_for(cmd);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--out", *out, "output directory")->required();
    flags->add(cmd, "--scenes", &mb::RunConfig::scenes, "number of scenes");
    cmd->callback([flags, out, &code] {
      code = mb::cmd_generate({flags->resolve(), *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("train-jointspace", "train the contrastive dual encoder");
    auto flags = flags_for(cmd);
    auto corpus = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--corpus", *corpus, "corpus directory")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->callback([flags, corpus, out, &code] {
      code = mb::cmd_train_jointspace({flags->resolve(), *corpus, *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("pretrain-decoder", "pretrain the caption language model");
    auto flags = flags_for(cmd);
    auto corpus = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--corpus", *corpus, "corpus directory")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->callback([flags, corpus, out, &code] {
      code = mb::cmd_pretrain_decoder({flags->resolve(), *corpus, *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("train-adapter", "fit the text-to-audio linear adapter");
    auto flags = flags_for(cmd);
    auto corpus = std::make_shared<std::string>();
    auto encoder = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--corpus", *corpus, "corpus directory")->required();
    cmd->add_option("--encoder", *encoder, "encoder checkpoint")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->callback([flags, corpus, encoder, out, &code] {
      code = mb::cmd_train_adapter({flags->resolve(), *corpus, *encoder, *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("estimate-gap", "estimate the audio-text embedding gap");
    auto flags = flags_for(cmd);
    auto corpus = std::make_shared<std::string>();
    auto encoder = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--corpus", *corpus, "corpus directory")->required();
    cmd->add_option("--encoder", *encoder, "encoder checkpoint")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    flags->add(cmd, "--samples", &mb::RunConfig::gap_samples, "pairs sampled for the estimate");
    cmd->callback([flags, corpus, encoder, out, &code] {
      code = mb::cmd_estimate_gap({flags->resolve(), *corpus, *encoder, *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("train-captioner", "train the prefix mapping network");
    auto flags = flags_for(cmd);
    auto corpus = std::make_shared<std::string>();
    auto encoder = std::make_shared<std::string>();
    auto decoder = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto adapter = std::make_shared<std::string>();
    auto extra = std::make_shared<std::string>();
    auto style = std::make_shared<std::string>();
    cmd->add_option("--corpus", *corpus, "corpus directory")->required();
    cmd->add_option("--encoder", *encoder, "encoder checkpoint")->required();
    cmd->add_option("--decoder", *decoder, "decoder checkpoint")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->add_option("--adapter", *adapter, "adapter checkpoint, for adapter bridges");
    cmd->add_option("--extra", *extra, "extra caption JSONL appended to the training pool");
    cmd->add_option("--style", *style, "style applied to training captions");
    flags->add(cmd, "--mode", &mb::RunConfig::mode, "text-only or audio-text");
    flags->add(cmd, "--bridge", &mb::RunConfig::bridge,
               "none, noise, adapter, or adapter+noise");
    flags->add(cmd, "--noise-std", &mb::RunConfig::noise_std, "noise scale for the noise bridge");
    cmd->callback([flags, corpus, encoder, decoder, out, adapter, extra, style, &code] {
      mb::TrainCaptionerArgs args;
      args.rc = flags->resolve();
      args.corpus = *corpus;
      args.encoder = *encoder;
      args.decoder = *decoder;
      args.out = *out;
      args.adapter = *adapter;
      args.extra = *extra;
      args.style = *style;
      code = mb::cmd_train_captioner(args);
    });
  }
  {
    auto* cmd = app.add_subcommand("infer", "caption audio features with beam search");
    auto flags = flags_for(cmd);
    auto corpus = std::make_shared<std::string>();
    auto encoder = std::make_shared<std::string>();
    auto decoder = std::make_shared<std::string>();
    auto mapper = std::make_shared<std::string>();
    auto input = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--corpus", *corpus, "corpus directory, for the vocabulary")->required();
    cmd->add_option("--encoder", *encoder, "encoder checkpoint")->required();
    cmd->add_option("--decoder", *decoder, "decoder checkpoint")->required();
    cmd->add_option("--mapper", *mapper, "mapper checkpoint")->required();
    cmd->add_option("--input", *input, "JSONL records with audio features")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    flags->add(cmd, "--beam", &mb::RunConfig::beam, "beam width");
    flags->add(cmd, "--max-len", &mb::RunConfig::max_len, "caption length cap");
    cmd->callback([flags, corpus, encoder, decoder, mapper, input, out, &code] {
      code = mb::cmd_infer(
          {flags->resolve(), *corpus, *encoder, *decoder, *mapper, *input, *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("evaluate", "score predictions against references");
    auto flags = flags_for(cmd);
    auto pred = std::make_shared<std::string>();
    auto ref = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--pred", *pred, "predictions JSONL")->required();
    cmd->add_option("--ref", *ref, "references JSONL")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    flags->add_flag(cmd, "--smoothing", &mb::RunConfig::bleu_smoothing,
                    "add-one smoothing for higher BLEU orders");
    cmd->callback([flags, pred, ref, out, &code] {
      code = mb::cmd_evaluate({flags->resolve(), *pred, *ref, *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("sweep-point", "one noise grid point: train, infer, evaluate");
    auto flags = flags_for(cmd);
    auto corpus = std::make_shared<std::string>();
    auto encoder = std::make_shared<std::string>();
    auto decoder = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--corpus", *corpus, "corpus directory")->required();
    cmd->add_option("--encoder", *encoder, "encoder checkpoint")->required();
    cmd->add_option("--decoder", *decoder, "decoder checkpoint")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    flags->add(cmd, "--noise-std", &mb::RunConfig::noise_std, "noise scale for this point");
    cmd->callback([flags, corpus, encoder, decoder, out, &code] {
      code = mb::cmd_sweep_point({flags->resolve(), *corpus, *encoder, *decoder, *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("sweep-noise", "sweep the noise scale over a grid");
    auto flags = flags_for(cmd);
    auto corpus = std::make_shared<std::string>();
    auto encoder = std::make_shared<std::string>();
    auto decoder = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto stds = std::make_shared<std::string>();
    auto jobs = std::make_shared<int>(1);
    auto gnuplot = std::make_shared<bool>(false);
    cmd->add_option("--corpus", *corpus, "corpus directory")->required();
    cmd->add_option("--encoder", *encoder, "encoder checkpoint")->required();
    cmd->add_option("--decoder", *decoder, "decoder checkpoint")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    auto* stds_opt = cmd->add_option("--stds", *stds, "comma-separated noise scales");
    cmd->add_option("--jobs", *jobs, "concurrent grid points");
    cmd->add_flag("--gnuplot-script", *gnuplot, "also write plot.gp");
    cmd->callback([flags, corpus, encoder, decoder, out, stds, stds_opt, jobs, gnuplot, &code] {
      mb::SweepNoiseArgs args;
      args.rc = flags->resolve();
      args.corpus = *corpus;
      args.encoder = *encoder;
      args.decoder = *decoder;
      args.out = *out;
      if (stds_opt->count() > 0) args.stds = *stds;
      args.jobs = *jobs;
      args.gnuplot = *gnuplot;
      code = mb::cmd_sweep_noise(args);
    });
  }
  {
    auto* cmd = app.add_subcommand("experiment", "run a named paired comparison end to end");
    auto flags = flags_for(cmd);
    auto name = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("name", *name, "compare-modes, augmented-text, or style")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->callback([flags, name, out, &code] {
      code = mb::cmd_experiment({flags->resolve(), *name, *out});
    });
  }
  {
    auto* cmd = app.add_subcommand("verify", "re-hash the files recorded in a run manifest");
    auto dir = std::make_shared<std::string>();
    cmd->add_option("dir", *dir, "run directory with manifest.json")->required();
    cmd->callback([dir, &code] { code = mb::cmd_verify({*dir}); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", single_line(e.what()).c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", single_line(e.what()).c_str());
    return 1;
  }
  return code;
}
