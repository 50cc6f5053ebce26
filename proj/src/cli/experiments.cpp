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

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mb/commands.hpp"
#include "mb/jsonl.hpp"

namespace mb {

namespace {

std::string joined(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void write_kv_log(const std::string& dir, const std::vector<std::pair<std::string, double>>& kv) {
  std::string text = "key,value\n";
  for (const auto& [k, v] : kv) text += k + "," + num(v) + "\n";
  write_text_file(joined(dir, "log.csv"), text);
}

}  // namespace

// ---- sweep-point ---------------------------------------------------------

int cmd_sweep_point(const SweepPointArgs& args) {
  RunConfig rc = args.rc;
  rc.mode = "text-only";
  rc.bridge = "noise";

  TrainCaptionerArgs train;
  train.rc = rc;
  train.corpus = args.corpus;
  train.encoder = args.encoder;
  train.decoder = args.decoder;
  train.out = joined(args.out, "captioner");
  cmd_train_captioner(train);

  InferArgs infer;
  infer.rc = rc;
  infer.corpus = args.corpus;
  infer.encoder = args.encoder;
  infer.decoder = args.decoder;
  infer.mapper = joined(train.out, "mapper.ckpt");
  infer.input = joined(args.corpus, "test.jsonl");
  infer.out = joined(args.out, "infer");
  cmd_infer(infer);

  EvaluateArgs eval;
  eval.rc = rc;
  eval.pred = joined(infer.out, "predictions.jsonl");
  eval.ref = joined(args.corpus, "test_refs.jsonl");
  eval.out = joined(args.out, "eval");
  cmd_evaluate(eval);

  nlohmann::json metrics = read_json_file(joined(eval.out, "metrics.json"));
  nlohmann::json point;
  point["noise_std"] = rc.noise_std;
  point["seed"] = rc.seed;
  point["metrics"] = metrics;
  write_json_file(joined(args.out, "point.json"), point);
  save_runconfig(rc, joined(args.out, "config.json"));
  write_kv_log(args.out, {{"noise_std", rc.noise_std},
                          {"cider_d", metrics.at("cider_d").get<double>()}});
  write_manifest(args.out, {"point.json", "config.json", "log.csv"},
                 nlohmann::json::object());
  return 0;
}

// ---- sweep-noise ---------------------------------------------------------

namespace {

std::vector<double> parse_std_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto b = tok.find_first_not_of(" \t");
    if (b == std::string::npos)
      throw std::invalid_argument("sweep: empty entry in std list '" + text + "'");
    const auto e = tok.find_last_not_of(" \t");
    const std::string item = tok.substr(b, e - b + 1);
    size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(item, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("sweep: non-numeric std '" + item + "'");
    }
    if (used != item.size()) throw std::invalid_argument("sweep: non-numeric std '" + item + "'");
    if (value < 0.0) throw std::invalid_argument("sweep: negative std '" + item + "'");
    out.push_back(value);
  }
  if (out.empty()) throw std::invalid_argument("sweep: empty std list");
  return out;
}

// Runs argv with up to `jobs` children alive at once. Children do identical
// work no matter the schedule, so parallel output equals sequential output.
void run_children(const std::vector<std::vector<std::string>>& commands, int jobs) {
  std::map<pid_t, size_t> running;
  size_t next = 0;
  std::vector<int> status(commands.size(), -1);
  while (next < commands.size() || !running.empty()) {
    while (next < commands.size() && static_cast<int>(running.size()) < jobs) {
      const auto& argv = commands[next];
      std::vector<char*> cargv;
      cargv.reserve(argv.size() + 1);
      for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
      cargv.push_back(nullptr);
      const pid_t pid = fork();
      if (pid < 0) throw std::runtime_error("sweep: fork failed");
      if (pid == 0) {
        execv(cargv[0], cargv.data());
        _exit(127);
      }
      running[pid] = next++;
    }
    int wstatus = 0;
    const pid_t done = waitpid(-1, &wstatus, 0);
    if (done < 0) throw std::runtime_error("sweep: waitpid failed");
    const auto it = running.find(done);
    if (it == running.end()) continue;
    status[it->second] =
        WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : 128 + WTERMSIG(wstatus);
    running.erase(it);
  }
  for (size_t i = 0; i < status.size(); ++i)
    if (status[i] != 0)
      throw std::runtime_error("sweep: point " + std::to_string(i) + " failed (exit " +
                               std::to_string(status[i]) + ")");
}

std::string self_executable() {
  std::error_code ec;
  const auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (ec) throw std::runtime_error("sweep: cannot resolve own executable");
  return p.string();
}

constexpr const char* kSweepCsvHeader =
    "noise_std,bleu1,bleu2,bleu3,bleu4,rouge_l,cider_d\n";

std::string metrics_csv_row(double std_value, const nlohmann::json& m) {
  return num(std_value) + "," + num(m.at("bleu1").get<double>()) + "," +
         num(m.at("bleu2").get<double>()) + "," + num(m.at("bleu3").get<double>()) + "," +
         num(m.at("bleu4").get<double>()) + "," + num(m.at("rouge_l").get<double>()) + "," +
         num(m.at("cider_d").get<double>()) + "\n";
}

constexpr const char* kGnuplotScript =
    "set datafile separator comma\n"
    "set xlabel 'noise std'\n"
    "set ylabel 'CIDEr-D'\n"
    "set key off\n"
    "set terminal png size 800,500\n"
    "set output 'sweep.png'\n"
    "plot 'sweep.csv' using 1:7 skip 1 with linespoints\n";

}  // namespace

int cmd_sweep_noise(const SweepNoiseArgs& args) {
  if (args.jobs < 1) throw std::invalid_argument("sweep: jobs must be at least 1");
  std::vector<double> stds = parse_std_list(args.stds);
  std::sort(stds.begin(), stds.end());

  ensure_dir(args.out);
  save_runconfig(args.rc, joined(args.out, "config.json"));
  const std::string exe = self_executable();
  const std::string config_path = joined(args.out, "config.json");

  std::vector<std::string> point_dirs;
  std::vector<std::vector<std::string>> commands;
  for (size_t i = 0; i < stds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "point_%02zu", i);
    const std::string dir = joined(args.out, name);
    point_dirs.push_back(dir);
    const uint64_t seed = mix64(args.rc.seed, 0x5EE90000ull + i);
    commands.push_back({exe, "sweep-point", "--config", config_path, "--corpus", args.corpus,
                        "--encoder", args.encoder, "--decoder", args.decoder, "--out", dir,
                        "--noise-std", num(stds[i]), "--seed", std::to_string(seed)});
  }
  run_children(commands, args.jobs);

  std::string csv = kSweepCsvHeader;
  double best_std = 0.0, best_cider = -1.0;
  for (size_t i = 0; i < stds.size(); ++i) {
    const nlohmann::json point = read_json_file(joined(point_dirs[i], "point.json"));
    const nlohmann::json& m = point.at("metrics");
    csv += metrics_csv_row(stds[i], m);
    const double cider = m.at("cider_d").get<double>();
    if (cider > best_cider) {
      best_cider = cider;
      best_std = stds[i];
    }
  }
  write_text_file(joined(args.out, "sweep.csv"), csv);
  std::vector<std::string> manifest_files = {"config.json", "log.csv", "sweep.csv"};
  if (args.gnuplot) {
    write_text_file(joined(args.out, "plot.gp"), kGnuplotScript);
    manifest_files.push_back("plot.gp");
  }
  write_kv_log(args.out, {{"points", static_cast<double>(stds.size())},
                          {"jobs", static_cast<double>(args.jobs)},
                          {"best_std", best_std},
                          {"best_cider_d", best_cider}});
  nlohmann::json extra;
  extra["best_std"] = best_std;
  extra["best_cider_d"] = best_cider;
  write_manifest(args.out, manifest_files, extra);
  std::printf("sweep-noise: %zu points, best std=%s cider_d=%s -> %s\n", stds.size(),
              num(best_std).c_str(), num(best_cider).c_str(), args.out.c_str());
  return 0;
}

// ---- experiment ----------------------------------------------------------

namespace {

struct ExperimentContext {
  std::string corpus, encoder_ckpt, decoder_ckpt;
  double epsilon_hat = 0.0;
};

ExperimentContext bootstrap(const RunConfig& rc, const std::string& out) {
  ExperimentContext ctx;
  ctx.corpus = joined(out, "corpus");
  if (!std::filesystem::exists(joined(ctx.corpus, "manifest.json")))
    cmd_generate({rc, ctx.corpus});

  const std::string enc_dir = joined(out, "encoder");
  ctx.encoder_ckpt = joined(enc_dir, "encoder.ckpt");
  if (!std::filesystem::exists(ctx.encoder_ckpt))
    cmd_train_jointspace({rc, ctx.corpus, enc_dir});

  const std::string dec_dir = joined(out, "decoder");
  ctx.decoder_ckpt = joined(dec_dir, "decoder.ckpt");
  if (!std::filesystem::exists(ctx.decoder_ckpt))
    cmd_pretrain_decoder({rc, ctx.corpus, dec_dir});

  const std::string gap_dir = joined(out, "gap");
  const std::string gap_path = joined(gap_dir, "gap.json");
  if (!std::filesystem::exists(gap_path))
    cmd_estimate_gap({rc, ctx.corpus, ctx.encoder_ckpt, gap_dir});
  ctx.epsilon_hat = read_json_file(gap_path).at("epsilon_hat").get<double>();
  return ctx;
}

// Trains one condition, decodes the shared test split, returns its metrics.
nlohmann::json run_condition(const RunConfig& rc, const ExperimentContext& ctx,
                             const std::string& out, const std::string& name,
                             const std::string& extra_pool, const std::string& style,
                             const std::string& ref_path) {
  const std::string dir = joined(joined(out, "runs"), name);

  TrainCaptionerArgs train;
  train.rc = rc;
  train.corpus = ctx.corpus;
  train.encoder = ctx.encoder_ckpt;
  train.decoder = ctx.decoder_ckpt;
  train.out = joined(dir, "captioner");
  train.extra = extra_pool;
  train.style = style;
  cmd_train_captioner(train);

  InferArgs infer;
  infer.rc = rc;
  infer.corpus = ctx.corpus;
  infer.encoder = ctx.encoder_ckpt;
  infer.decoder = ctx.decoder_ckpt;
  infer.mapper = joined(train.out, "mapper.ckpt");
  infer.input = joined(ctx.corpus, "test.jsonl");
  infer.out = joined(dir, "infer");
  cmd_infer(infer);

  EvaluateArgs eval;
  eval.rc = rc;
  eval.pred = joined(infer.out, "predictions.jsonl");
  eval.ref = ref_path;
  eval.out = joined(dir, "eval");
  cmd_evaluate(eval);

  return read_json_file(joined(eval.out, "metrics.json"));
}

nlohmann::json experiment_compare_modes(const RunConfig& rc, const ExperimentContext& ctx,
                                        const std::string& out) {
  const std::string refs = joined(ctx.corpus, "test_refs.jsonl");
  RunConfig text_rc = rc;
  text_rc.mode = "text-only";
  text_rc.bridge = "noise";
  text_rc.noise_std = ctx.epsilon_hat;
  const auto text_metrics = run_condition(text_rc, ctx, out, "text_only", "", "", refs);

  RunConfig audio_rc = rc;
  audio_rc.mode = "audio-text";
  audio_rc.bridge = "none";
  audio_rc.noise_std = 0.0;
  const auto audio_metrics = run_condition(audio_rc, ctx, out, "audio_text", "", "", refs);

  nlohmann::json report;
  report["experiment"] = "compare-modes";
  report["epsilon_hat"] = ctx.epsilon_hat;
  report["conditions"]["text_only"] = text_metrics;
  report["conditions"]["audio_text"] = audio_metrics;
  const double text_cider = text_metrics.at("cider_d").get<double>();
  const double audio_cider = audio_metrics.at("cider_d").get<double>();
  report["cider_d_abs_diff"] = std::abs(text_cider - audio_cider);
  report["cider_d_ratio"] = audio_cider > 0.0 ? text_cider / audio_cider : 0.0;
  return report;
}

nlohmann::json experiment_augmented_text(const RunConfig& rc, const ExperimentContext& ctx,
                                         const std::string& out) {
  const std::string refs = joined(ctx.corpus, "test_refs.jsonl");
  RunConfig cond_rc = rc;
  cond_rc.mode = "text-only";
  cond_rc.bridge = "noise";
  cond_rc.noise_std = ctx.epsilon_hat;
  const auto base = run_condition(cond_rc, ctx, out, "baseline", "", "", refs);
  const auto augmented = run_condition(cond_rc, ctx, out, "augmented",
                                       joined(ctx.corpus, "train_extra.jsonl"), "", refs);

  nlohmann::json report;
  report["experiment"] = "augmented-text";
  report["epsilon_hat"] = ctx.epsilon_hat;
  report["conditions"]["baseline"] = base;
  report["conditions"]["augmented"] = augmented;
  report["bleu1_delta"] = augmented.at("bleu1").get<double>() - base.at("bleu1").get<double>();
  report["bleu2_delta"] = augmented.at("bleu2").get<double>() - base.at("bleu2").get<double>();
  return report;
}

nlohmann::json experiment_style(const RunConfig& rc, const ExperimentContext& ctx,
                                const std::string& out) {
  // Styled references: every test reference caption wrapped the same way
  // the styled training captions are.
  const int style_id = style_id_by_name("humorous");
  const auto refs = load_refs(joined(ctx.corpus, "test_refs.jsonl"));
  std::vector<nlohmann::json> styled_refs;
  styled_refs.reserve(refs.size());
  for (const auto& r : refs) {
    nlohmann::json j;
    j["id"] = r.id;
    auto& caps = j["captions"] = nlohmann::json::array();
    for (const auto& c : r.captions) caps.push_back(stylize(c, style_id, rc.seed));
    styled_refs.push_back(std::move(j));
  }
  ensure_dir(out);
  const std::string styled_ref_path = joined(out, "styled_test_refs.jsonl");
  write_jsonl(styled_ref_path, styled_refs);

  RunConfig cond_rc = rc;
  cond_rc.mode = "text-only";
  cond_rc.bridge = "noise";
  cond_rc.noise_std = ctx.epsilon_hat;
  const auto plain = run_condition(cond_rc, ctx, out, "plain_trained", "", "", styled_ref_path);
  const auto styled =
      run_condition(cond_rc, ctx, out, "style_trained", "", "humorous", styled_ref_path);

  nlohmann::json report;
  report["experiment"] = "style";
  report["epsilon_hat"] = ctx.epsilon_hat;
  report["style"] = "humorous";
  report["conditions"]["plain_trained"] = plain;
  report["conditions"]["style_trained"] = styled;
  report["bleu1_delta"] = styled.at("bleu1").get<double>() - plain.at("bleu1").get<double>();
  report["bleu2_delta"] = styled.at("bleu2").get<double>() - plain.at("bleu2").get<double>();
  report["cider_d_delta"] = styled.at("cider_d").get<double>() - plain.at("cider_d").get<double>();
  return report;
}

}  // namespace

int cmd_experiment(const ExperimentArgs& args) {
  const std::string& name = args.name;
  if (name != "compare-modes" && name != "augmented-text" && name != "style")
    throw std::invalid_argument("unknown experiment '" + name +
                                "' (expected compare-modes, augmented-text, style)");
  ensure_dir(args.out);
  const ExperimentContext ctx = bootstrap(args.rc, args.out);

  nlohmann::json report;
  if (name == "compare-modes") report = experiment_compare_modes(args.rc, ctx, args.out);
  if (name == "augmented-text") report = experiment_augmented_text(args.rc, ctx, args.out);
  if (name == "style") report = experiment_style(args.rc, ctx, args.out);

  write_json_file(joined(args.out, "report.json"), report);
  save_runconfig(args.rc, joined(args.out, "config.json"));
  write_kv_log(args.out, {{"epsilon_hat", ctx.epsilon_hat}});
  write_manifest(args.out, {"report.json", "config.json", "log.csv"}, nlohmann::json::object());
  std::printf("experiment %s: report -> %s\n", name.c_str(),
              joined(args.out, "report.json").c_str());
  return 0;
}

}  // namespace mb
