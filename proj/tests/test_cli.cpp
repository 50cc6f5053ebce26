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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "mb/commands.hpp"
#include "mb/digest.hpp"
#include "mb/jsonl.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mb_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Small stages so the whole chain runs in seconds.
mb::RunConfig tiny_rc() {
  mb::RunConfig rc;
  rc.scenes = 60;
  rc.audio_dim = 24;
  rc.embed_dim = 16;
  rc.token_dim = 16;
  rc.encoder_hidden_dim = 32;
  rc.jointspace_epochs = 2;
  rc.jointspace_batch = 16;
  rc.jointspace_warmup = 4;
  rc.model_dim = 32;
  rc.decoder_layers = 1;
  rc.decoder_heads = 2;
  rc.max_positions = 48;
  rc.ff_mult = 2;
  rc.decoder_epochs = 2;
  rc.decoder_batch = 8;
  rc.decoder_warmup = 4;
  rc.adapter_epochs = 50;
  rc.prefix_len = 4;
  rc.mapper_layers = 1;
  rc.mapper_heads = 2;
  rc.captioner_epochs = 2;
  rc.captioner_batch = 8;
  rc.captioner_warmup = 4;
  rc.beam = 3;
  rc.max_len = 12;
  return rc;
}

struct CliResult {
  int code = -1;
  std::string out, err;
};

// Runs the installed binary through the shell; env_prefix holds VAR=value
// assignments prepended to the command.
CliResult run_cli(const std::string& args, const TempDir& td,
                  const std::string& env_prefix = "") {
  const char* cli = std::getenv("MB_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "MB_CLI must point at the modbridge binary");
  const std::string so = td / "cli_stdout.txt";
  const std::string se = td / "cli_stderr.txt";
  const std::string cmd = (env_prefix.empty() ? "" : env_prefix + " ") + "\"" +
                          std::string(cli) + "\" " + args + " > \"" + so + "\" 2> \"" + se +
                          "\"";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

bool single_error_line(const std::string& err) {
  if (err.size() < 8 || err.compare(0, 7, "error: ") != 0) return false;
  if (err.back() != '\n') return false;
  return err.find('\n') == err.size() - 1;
}

}  // namespace

TEST_CASE("presets and config files resolve strictly") {
  mb::RunConfig rc;
  mb::apply_preset(rc, "toy");
  CHECK(rc.seed == 7);
  CHECK(rc.scenes == 2000);
  CHECK(rc.captioner_lr == 1e-3);

  mb::apply_preset(rc, "paper-scale");
  CHECK(rc.preset == "paper-scale");
  CHECK(rc.captioner_lr == 1e-4);
  CHECK(rc.captioner_warmup == 2000);
  CHECK(rc.captioner_batch == 128);
  CHECK(rc.captioner_epochs == 30);
  CHECK(rc.prefix_len == 40);
  CHECK(rc.decoder_epochs == 12);  // untouched by the preset
  CHECK_THROWS_AS(mb::apply_preset(rc, "huge"), std::invalid_argument);

  mb::RunConfig t = tiny_rc();
  t.mode = "audio-text";
  t.noise_std = 0.25;
  const mb::RunConfig back = mb::runconfig_from_json(mb::runconfig_to_json(t));
  CHECK(mb::runconfig_to_json(back) == mb::runconfig_to_json(t));

  mb::RunConfig base;
  mb::runconfig_merge_json(base, {{"scenes", 50}, {"beam", 2}});
  CHECK(base.scenes == 50);
  CHECK(base.beam == 2);
  CHECK(base.model_dim == 64);  // untouched keys keep their defaults
  CHECK_THROWS_WITH_AS(mb::runconfig_merge_json(base, {{"scene", 1}}),
                       "config: unknown key 'scene'", std::invalid_argument);
  CHECK_THROWS_WITH_AS(mb::runconfig_merge_json(base, {{"scenes", "many"}}),
                       "config: bad value for key 'scenes'", std::invalid_argument);
  CHECK_THROWS_AS(mb::runconfig_merge_json(base, nlohmann::json::array()),
                  std::invalid_argument);
}

TEST_CASE("tiny pipeline end to end") {
  TempDir td;
  const mb::RunConfig rc = tiny_rc();

  // generate
  const std::string corpus = td / "corpus";
  REQUIRE(mb::cmd_generate({rc, corpus}) == 0);
  for (const char* name :
       {"train.jsonl", "val.jsonl", "test.jsonl", "train_extra.jsonl", "val_refs.jsonl",
        "test_refs.jsonl", "vocab.json", "manifest.json", "config.json", "log.csv"})
    CHECK(fs::exists(fs::path(corpus) / name));
  CHECK(mb::cmd_verify({corpus}) == 0);
  const mb::RunConfig saved = mb::load_runconfig(corpus + "/config.json");
  CHECK(saved.seed == 7);
  CHECK(saved.scenes == 60);

  // Same seed, same corpus: only the manifest timestamp may differ.
  const std::string corpus2 = td / "corpus2";
  REQUIRE(mb::cmd_generate({rc, corpus2}) == 0);
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl", "train_extra.jsonl",
                           "test_refs.jsonl", "vocab.json"})
    CHECK(slurp(corpus + "/" + name) == slurp(corpus2 + "/" + name));
  nlohmann::json m1 = mb::read_json_file(corpus + "/manifest.json");
  nlohmann::json m2 = mb::read_json_file(corpus2 + "/manifest.json");
  m1.erase("generated_at");
  m2.erase("generated_at");
  CHECK(m1 == m2);

  // jointspace
  const std::string enc_dir = td / "enc";
  REQUIRE(mb::cmd_train_jointspace({rc, corpus, enc_dir}) == 0);
  const std::string enc_ckpt = enc_dir + "/encoder.ckpt";
  CHECK(fs::exists(enc_ckpt));
  CHECK(mb::cmd_verify({enc_dir}) == 0);
  CHECK(slurp(enc_dir + "/log.csv").rfind("epoch,loss,lr\n", 0) == 0);
  const nlohmann::json enc_manifest = mb::read_json_file(enc_dir + "/manifest.json");
  CHECK(enc_manifest.at("files").at("encoder.ckpt").get<std::string>() ==
        mb::sha256_file(enc_ckpt));

  // decoder
  const std::string dec_dir = td / "dec";
  REQUIRE(mb::cmd_pretrain_decoder({rc, corpus, dec_dir}) == 0);
  const std::string dec_ckpt = dec_dir + "/decoder.ckpt";
  CHECK(fs::exists(dec_ckpt));
  CHECK(mb::cmd_verify({dec_dir}) == 0);

  // gap estimate
  const std::string gap_dir = td / "gap";
  REQUIRE(mb::cmd_estimate_gap({rc, corpus, enc_ckpt, gap_dir}) == 0);
  const nlohmann::json gap = mb::read_json_file(gap_dir + "/gap.json");
  CHECK(gap.at("epsilon_hat").get<double>() > 0.0);
  CHECK(gap.at("samples").get<int>() == 30);
  CHECK(gap.at("mean_pair_linf").get<double>() > 0.0);
  CHECK(mb::cmd_verify({gap_dir}) == 0);

  // adapter
  const std::string ada_dir = td / "ada";
  REQUIRE(mb::cmd_train_adapter({rc, corpus, enc_ckpt, ada_dir}) == 0);
  CHECK(fs::exists(ada_dir + "/adapter.ckpt"));
  const nlohmann::json ada_manifest = mb::read_json_file(ada_dir + "/manifest.json");
  CHECK(ada_manifest.contains("val_mse"));
  CHECK(ada_manifest.contains("val_gap_mse"));
  CHECK(mb::cmd_verify({ada_dir}) == 0);

  // captioner, text-only with the noise bridge
  const std::string enc_sha_before = mb::sha256_file(enc_ckpt);
  const std::string dec_sha_before = mb::sha256_file(dec_ckpt);
  mb::RunConfig cap_rc = rc;
  cap_rc.mode = "text-only";
  cap_rc.bridge = "noise";
  cap_rc.noise_std = 0.1;
  const std::string cap_dir = td / "cap";
  REQUIRE(mb::cmd_train_captioner({cap_rc, corpus, enc_ckpt, dec_ckpt, cap_dir, "", "", ""}) ==
          0);
  CHECK(fs::exists(cap_dir + "/mapper.ckpt"));
  const nlohmann::json cap_manifest = mb::read_json_file(cap_dir + "/manifest.json");
  CHECK(cap_manifest.at("mode").get<std::string>() == "text-only");
  CHECK(cap_manifest.at("bridge").get<std::string>() == "noise");
  CHECK(cap_manifest.at("noise_std").get<double>() == 0.1);
  // Frozen contract: training consumed the checkpoints without touching them,
  // and the manifest records exactly what it read.
  CHECK(cap_manifest.at("encoder_ckpt_sha256").get<std::string>() == enc_sha_before);
  CHECK(cap_manifest.at("decoder_ckpt_sha256").get<std::string>() == dec_sha_before);
  CHECK(mb::sha256_file(enc_ckpt) == enc_sha_before);
  CHECK(mb::sha256_file(dec_ckpt) == dec_sha_before);

  // Re-running the same training yields the same mapper bytes.
  const std::string cap_dir2 = td / "cap2";
  REQUIRE(mb::cmd_train_captioner({cap_rc, corpus, enc_ckpt, dec_ckpt, cap_dir2, "", "", ""}) ==
          0);
  CHECK(slurp(cap_dir + "/mapper.ckpt") == slurp(cap_dir2 + "/mapper.ckpt"));

  // audio-text arm, no bridge
  mb::RunConfig at_rc = rc;
  at_rc.mode = "audio-text";
  at_rc.bridge = "none";
  const std::string cap_at = td / "cap_at";
  REQUIRE(mb::cmd_train_captioner({at_rc, corpus, enc_ckpt, dec_ckpt, cap_at, "", "", ""}) == 0);

  // extra text pool grows the training set
  const std::string cap_extra = td / "cap_extra";
  REQUIRE(mb::cmd_train_captioner({cap_rc, corpus, enc_ckpt, dec_ckpt, cap_extra, "",
                                   corpus + "/train_extra.jsonl", ""}) == 0);
  const nlohmann::json extra_manifest = mb::read_json_file(cap_extra + "/manifest.json");
  CHECK(extra_manifest.at("num_examples").get<int>() >
        cap_manifest.at("num_examples").get<int>());

  // styled training changes the mapper
  const std::string cap_style = td / "cap_style";
  REQUIRE(mb::cmd_train_captioner({cap_rc, corpus, enc_ckpt, dec_ckpt, cap_style, "", "",
                                   "humorous"}) == 0);
  CHECK(slurp(cap_style + "/mapper.ckpt") != slurp(cap_dir + "/mapper.ckpt"));

  // inference over the test split
  const std::string inf_dir = td / "inf";
  REQUIRE(mb::cmd_infer({cap_rc, corpus, enc_ckpt, dec_ckpt, cap_dir + "/mapper.ckpt",
                         corpus + "/test.jsonl", inf_dir}) == 0);
  const auto preds = mb::read_jsonl(inf_dir + "/predictions.jsonl");
  const auto test_records = mb::load_records(corpus + "/test.jsonl");
  REQUIRE(preds.size() == test_records.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].at("id").get<std::string>() == test_records[i].id);
    CHECK(!preds[i].at("caption").get<std::string>().empty());
  }
  CHECK(mb::cmd_verify({inf_dir}) == 0);

  const std::string inf_dir2 = td / "inf2";
  REQUIRE(mb::cmd_infer({cap_rc, corpus, enc_ckpt, dec_ckpt, cap_dir + "/mapper.ckpt",
                         corpus + "/test.jsonl", inf_dir2}) == 0);
  CHECK(slurp(inf_dir + "/predictions.jsonl") == slurp(inf_dir2 + "/predictions.jsonl"));

  // evaluation
  const std::string ev_dir = td / "ev";
  REQUIRE(mb::cmd_evaluate({cap_rc, inf_dir + "/predictions.jsonl",
                            corpus + "/test_refs.jsonl", ev_dir}) == 0);
  const nlohmann::json metrics = mb::read_json_file(ev_dir + "/metrics.json");
  for (const char* k : {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider_d"})
    CHECK(metrics.contains(k));
  CHECK(metrics.at("num_examples").get<int>() == static_cast<int>(test_records.size()));
  CHECK(mb::cmd_verify({ev_dir}) == 0);

  // one sweep grid point end to end
  mb::RunConfig pt_rc = rc;
  pt_rc.noise_std = 0.1;
  const std::string pt_dir = td / "pt";
  REQUIRE(mb::cmd_sweep_point({pt_rc, corpus, enc_ckpt, dec_ckpt, pt_dir}) == 0);
  const nlohmann::json point = mb::read_json_file(pt_dir + "/point.json");
  CHECK(point.at("noise_std").get<double>() == 0.1);
  CHECK(point.at("metrics").contains("cider_d"));

  // tampering is detected
  {
    std::ofstream f(inf_dir + "/predictions.jsonl", std::ios::app);
    f << "x";
  }
  CHECK_THROWS_WITH_AS(mb::cmd_verify({inf_dir}),
                       doctest::Contains("hash mismatch for predictions.jsonl"),
                       std::runtime_error);

  // invalid requests fail before touching anything
  mb::RunConfig bad = cap_rc;
  bad.bridge = "blur";
  CHECK_THROWS_AS(mb::cmd_train_captioner({bad, corpus, enc_ckpt, dec_ckpt, td / "x1", "", "",
                                           ""}),
                  std::invalid_argument);
  bad = at_rc;
  bad.bridge = "noise";
  CHECK_THROWS_AS(mb::cmd_train_captioner({bad, corpus, enc_ckpt, dec_ckpt, td / "x2", "", "",
                                           ""}),
                  std::invalid_argument);
  bad = cap_rc;
  bad.bridge = "adapter";
  CHECK_THROWS_AS(mb::cmd_train_captioner({bad, corpus, enc_ckpt, dec_ckpt, td / "x3", "", "",
                                           ""}),
                  std::invalid_argument);
  CHECK_THROWS_AS(mb::cmd_train_captioner({at_rc, corpus, enc_ckpt, dec_ckpt, td / "x4", "",
                                           corpus + "/train_extra.jsonl", ""}),
                  std::invalid_argument);
  CHECK_THROWS_AS(mb::cmd_train_captioner({cap_rc, corpus, enc_ckpt, dec_ckpt, td / "x5", "",
                                           "", "sarcastic"}),
                  std::invalid_argument);
  CHECK_THROWS_AS(mb::cmd_experiment({rc, "ablate-everything", td / "x6"}),
                  std::invalid_argument);
  mb::SweepNoiseArgs sw{pt_rc, corpus, enc_ckpt, dec_ckpt, td / "x7"};
  sw.jobs = 0;
  CHECK_THROWS_AS(mb::cmd_sweep_noise(sw), std::invalid_argument);
  sw.jobs = 1;
  sw.stds = "0.1,,0.2";
  CHECK_THROWS_AS(mb::cmd_sweep_noise(sw), std::invalid_argument);
  sw.stds = "-0.5";
  CHECK_THROWS_AS(mb::cmd_sweep_noise(sw), std::invalid_argument);
  sw.stds = "fast";
  CHECK_THROWS_AS(mb::cmd_sweep_noise(sw), std::invalid_argument);

  // The sweep respawns its own binary per grid point, so it runs through
  // the CLI; a parallel schedule must reproduce the sequential bytes.
  const std::string cfg_path = td / "tiny.json";
  mb::save_runconfig(rc, cfg_path);
  const std::string common = std::string("sweep-noise --config \"") + cfg_path +
                             "\" --corpus \"" + corpus + "\" --encoder \"" + enc_ckpt +
                             "\" --decoder \"" + dec_ckpt + "\" --stds 0,0.1";
  const CliResult seq = run_cli(common + " --jobs 1 --out \"" + (td / "s1") + "\"", td);
  REQUIRE(seq.code == 0);
  CHECK(seq.out.find("sweep-noise: 2 points") != std::string::npos);
  const CliResult par = run_cli(common + " --jobs 2 --out \"" + (td / "s2") + "\"", td);
  REQUIRE(par.code == 0);
  const std::string csv = slurp(td / "s1/sweep.csv");
  CHECK(csv.rfind("noise_std,bleu1,bleu2,bleu3,bleu4,rouge_l,cider_d\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv == slurp(td / "s2/sweep.csv"));
  CHECK(slurp(td / "s1/point_00/point.json") == slurp(td / "s2/point_00/point.json"));
  CHECK(slurp(td / "s1/point_01/point.json") == slurp(td / "s2/point_01/point.json"));
  CHECK(slurp(td / "s1/point_00/captioner/mapper.ckpt") ==
        slurp(td / "s2/point_00/captioner/mapper.ckpt"));
  // Grid points carry independent derived seeds.
  const mb::RunConfig p0 = mb::load_runconfig(td / "s1/point_00/config.json");
  const mb::RunConfig p1 = mb::load_runconfig(td / "s1/point_01/config.json");
  CHECK(p0.seed != p1.seed);
  CHECK(p0.seed != rc.seed);
  CHECK(mb::cmd_verify({td / "s1"}) == 0);
  CHECK(mb::cmd_verify({td / "s1/point_00"}) == 0);
}

TEST_CASE("flag precedence and error formatting through the binary") {
  TempDir td;

  // Unknown subcommand and missing required flags are single-line errors.
  CliResult r = run_cli("caption-everything", td);
  CHECK(r.code != 0);
  CHECK(single_error_line(r.err));
  r = run_cli("generate", td);
  CHECK(r.code != 0);
  CHECK(single_error_line(r.err));

  // Unknown config keys are rejected by name.
  mb::write_json_file(td / "typo.json", {{"scene", 12}});
  r = run_cli("generate --config \"" + (td / "typo.json") + "\" --out \"" + (td / "g0") +
                  "\"",
              td);
  CHECK(r.code == 1);
  CHECK(single_error_line(r.err));
  CHECK(r.err.find("unknown key 'scene'") != std::string::npos);

  // Defaults, then preset, then config file, then MB_SEED, then flags.
  mb::RunConfig small = tiny_rc();
  small.scenes = 24;
  mb::save_runconfig(small, td / "small.json");

  r = run_cli("generate --config \"" + (td / "small.json") + "\" --out \"" + (td / "g1") +
                  "\"",
              td);
  REQUIRE(r.code == 0);
  mb::RunConfig got = mb::load_runconfig(td / "g1/config.json");
  CHECK(got.seed == 7);
  CHECK(got.scenes == 24);

  r = run_cli("generate --config \"" + (td / "small.json") + "\" --out \"" + (td / "g2") +
                  "\"",
              td, "MB_SEED=5");
  REQUIRE(r.code == 0);
  got = mb::load_runconfig(td / "g2/config.json");
  CHECK(got.seed == 5);

  r = run_cli("generate --config \"" + (td / "small.json") + "\" --seed 9 --out \"" +
                  (td / "g3") + "\"",
              td, "MB_SEED=5");
  REQUIRE(r.code == 0);
  got = mb::load_runconfig(td / "g3/config.json");
  CHECK(got.seed == 9);

  r = run_cli("generate --config \"" + (td / "small.json") + "\" --scenes 20 --out \"" +
                  (td / "g4") + "\"",
              td);
  REQUIRE(r.code == 0);
  got = mb::load_runconfig(td / "g4/config.json");
  CHECK(got.scenes == 20);

  // A preset fills its fields; the config file overrides what it names.
  nlohmann::json overlay = {{"captioner_epochs", 4}, {"scenes", 24}, {"audio_dim", 24}};
  mb::write_json_file(td / "overlay.json", overlay);
  r = run_cli("generate --preset paper-scale --config \"" + (td / "overlay.json") +
                  "\" --out \"" + (td / "g5") + "\"",
              td);
  REQUIRE(r.code == 0);
  got = mb::load_runconfig(td / "g5/config.json");
  CHECK(got.preset == "paper-scale");
  CHECK(got.captioner_lr == 1e-4);   // preset
  CHECK(got.prefix_len == 40);       // preset
  CHECK(got.captioner_epochs == 4);  // config wins over preset
  CHECK(got.scenes == 24);

  // A failing stage reports one line and a nonzero exit.
  r = run_cli("evaluate --pred \"" + (td / "absent.jsonl") + "\" --ref \"" +
                  (td / "absent.jsonl") + "\" --out \"" + (td / "ev") + "\"",
              td);
  CHECK(r.code == 1);
  CHECK(single_error_line(r.err));
}
