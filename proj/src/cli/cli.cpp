// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/cli/cli.hpp"

#include "moelora/train/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace moelora {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string run_dir;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file (overrides built-in defaults)");
  app->add_option("--set", c.sets, "key=value override; dotted path or unique leaf name (repeatable)");
  app->add_option("--run-dir", c.run_dir, "output directory (default: $MOELORA_RESULTS/<config fingerprint>)");
}

std::string file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read input '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(buf.str())));
  return hex;
}

struct Run {
  RunConfig config;
  fs::path dir;
};

/// Resolves the config and records it, the seed and input fingerprints.
Run open_run(const Common& c, const std::string& command, const std::vector<std::string>& inputs) {
  Run run;
  run.config = resolve_config(c.config, c.sets);
  run.dir = c.run_dir.empty() ? results_dir(run.config) : fs::path(c.run_dir);
  fs::create_directories(run.dir);
  {
    std::ofstream out(run.dir / "resolved_config.json");
    out << run.config.dump(2) << '\n';
  }
  ordered_json record;
  record["command"] = command;
  record["seed"] = config_seed(run.config);
  record["config_fingerprint"] = config_fingerprint(run.config);
  record["inputs"] = ordered_json::object();
  for (const auto& in : inputs) {
    if (!in.empty()) record["inputs"][in] = file_fingerprint(in);
  }
  std::ofstream out(run.dir / ("run_" + command + ".json"));
  out << record.dump(2) << '\n';
  return run;
}

EvalReport new_report(const std::string& name, const Run& run) {
  EvalReport r;
  r.name = name;
  r.meta["config_fingerprint"] = config_fingerprint(run.config);
  r.meta["seed"] = config_seed(run.config);
  return r;
}

void emit(const Run& run, const EvalReport& report) {
  write_report(run.dir, report);
  std::cout << report.name << ": " << report.metrics.dump() << '\n';
}

fs::path default_out(const Run& run, const std::string& out, const std::string& name) {
  return out.empty() ? run.dir / name : fs::path(out);
}

std::string seconds(double s) { return format_metric(s); }

// gen-data -----------------------------------------------------------------

int cmd_gen_data(const std::string& task, Index n, std::uint64_t seed, const std::string& split,
                 const std::string& out) {
  const Dataset d = generate_dataset(task, n, seed, parse_split(split), SkeletonSpec::toy17());
  if (const fs::path parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_dataset(out, d);
  std::cout << "wrote " << d.samples.size() << " " << task << " samples to " << out << '\n';
  return 0;
}

// train-tokenizer ----------------------------------------------------------

int cmd_train_tokenizer(const Common& c, const std::string& kind, const std::string& out) {
  if (kind != "motion" && kind != "pose") throw std::invalid_argument("--kind must be motion or pose");
  const Run run = open_run(c, "train-tokenizer-" + kind, {});
  const std::string section = kind == "pose" ? "pose_tokenizer" : "tokenizer";
  TokenizerRun tr = stage_train_tokenizer(run.config, section);
  const fs::path path = default_out(run, out, kind + "_tokenizer.ckpt");
  save_tokenizer(path, tr.tokenizer);
  EvalReport r = new_report("tokenizer_" + kind, run);
  r.metrics["heldout_mse"] = tr.heldout_mse;
  if (!tr.log.empty()) {
    r.metrics["final_rec"] = tr.log.back().rec;
    r.metrics["final_emb"] = tr.log.back().emb;
    r.metrics["final_com"] = tr.log.back().com;
  }
  Index resets = 0;
  for (const auto& e : tr.log) resets += e.resets;
  r.metrics["dead_code_resets"] = resets;
  r.csv_header = {"step", "rec", "emb", "com", "total", "resets"};
  for (const auto& e : tr.log) {
    r.csv_rows.push_back({std::to_string(e.step), format_metric(e.rec), format_metric(e.emb), format_metric(e.com),
                          format_metric(e.total), std::to_string(e.resets)});
  }
  r.meta["checkpoint"] = path.string();
  emit(run, r);
  return 0;
}

// pretrain-lm --------------------------------------------------------------

int cmd_pretrain(const Common& c, const std::string& out) {
  const Run run = open_run(c, "pretrain-lm", {});
  std::vector<LmLogEntry> log;
  ToyLm<float> lm = stage_pretrain(run.config, &log);
  const fs::path path = default_out(run, out, "lm.ckpt");
  Checkpoint ckpt;
  lm.save(ckpt);
  ckpt.save(path);
  EvalReport r = new_report("pretrain", run);
  r.metrics["final_loss"] = log.empty() ? 0.0 : log.back().loss;
  r.metrics["probe_accuracy"] = base_task_accuracy(lm, stage_probes(run.config));
  r.csv_header = {"step", "loss", "lr"};
  for (const auto& e : log) r.csv_rows.push_back({std::to_string(e.step), format_metric(e.loss), format_metric(e.lr)});
  r.meta["checkpoint"] = path.string();
  emit(run, r);
  return 0;
}

// tune ---------------------------------------------------------------------

ToyLm<float> load_lm(const std::string& path) {
  if (path.empty()) throw std::invalid_argument("missing --lm checkpoint");
  return ToyLm<float>::from_checkpoint(Checkpoint::load(path));
}

PartTokenizer<float> need_tokenizer(const std::string& path, const char* flag) {
  if (path.empty()) throw std::invalid_argument(std::string("missing ") + flag + " checkpoint");
  return load_tokenizer(path);
}

int cmd_tune(const Common& c, const std::string& lm_path, const std::string& motion_path,
             const std::string& pose_path, const std::string& out) {
  const Run run = open_run(c, "tune", {lm_path, motion_path, pose_path});
  const ToyLm<float> base = load_lm(lm_path);
  const PartTokenizer<float> motion = need_tokenizer(motion_path, "--motion-tok");
  const PartTokenizer<float> pose = need_tokenizer(pose_path, "--pose-tok");
  TuneRun tr = stage_tune(run.config, base, motion, pose);
  const bool gat = tune_config(run.config).gating_loss;
  const fs::path path = default_out(run, out, gat ? "tuned.ckpt" : "tuned_without_gating.ckpt");
  Checkpoint ckpt;
  tr.model.save(ckpt);
  ckpt.save(path);
  EvalReport r = new_report(gat ? "tune" : "tune_without_gating", run);
  if (!tr.log.empty()) {
    r.metrics["final_fm"] = tr.log.back().fm;
    r.metrics["final_gat"] = tr.log.back().gat;
    r.metrics["final_heldout_gat"] = tr.log.back().heldout_gat;
  }
  r.metrics["trainable_parameters"] = tr.model.trainable_parameter_count();
  r.csv_header = {"step", "fm", "gat", "lr", "heldout_gat"};
  for (const auto& e : tr.log) {
    r.csv_rows.push_back({std::to_string(e.step), format_metric(e.fm), format_metric(e.gat), format_metric(e.lr),
                          e.heldout_gat < 0 ? "" : format_metric(e.heldout_gat)});
  }
  r.meta["checkpoint"] = path.string();
  emit(run, r);
  return 0;
}

// eval ---------------------------------------------------------------------

int cmd_eval(const Common& c, const std::vector<std::string>& what, const std::string& lm_path,
             const std::string& tuned_path, const std::string& without_path, const std::string& motion_path,
             const std::string& pose_path) {
  const Run run = open_run(c, "eval", {lm_path, tuned_path, without_path, motion_path, pose_path});
  if (tuned_path.empty()) throw std::invalid_argument("missing --tuned checkpoint");
  const MotionLm<float> tuned = MotionLm<float>::from_checkpoint(Checkpoint::load(tuned_path));
  const EvalConfig ec = eval_config(run.config);
  const std::uint64_t seed = Rng(config_seed(run.config)).derive("eval").seed();
  const auto wants = [&](const std::string& w) {
    return std::find(what.begin(), what.end(), w) != what.end() || std::find(what.begin(), what.end(), "all") != what.end();
  };
  for (const auto& w : what) {
    if (w != "all" && w != "forgetting" && w != "routing" && w != "t2m" && w != "pose") {
      throw std::invalid_argument("unknown evaluation '" + w + "'");
    }
  }
  if (wants("forgetting")) {
    const ToyLm<float> base = load_lm(lm_path);
    std::optional<MotionLm<float>> without;
    if (!without_path.empty()) without = MotionLm<float>::from_checkpoint(Checkpoint::load(without_path));
    const ForgettingResult f = eval_forgetting(base, tuned, without ? &*without : nullptr, stage_probes(run.config));
    EvalReport r = new_report("forgetting", run);
    r.metrics["accuracy_before"] = f.before;
    r.metrics["accuracy_after"] = f.after;
    r.metrics["relative_drop"] = f.relative_drop();
    if (without) {
      r.metrics["accuracy_after_without_gating"] = f.after_without;
      r.metrics["retained_without_gating"] = f.retained_without();
    }
    r.csv_header = {"model", "accuracy"};
    r.csv_rows = {{"pretrained", format_metric(f.before)}, {"tuned", format_metric(f.after)}};
    if (without) r.csv_rows.push_back({"tuned_without_gating", format_metric(f.after_without)});
    emit(run, r);
  }
  if (wants("routing")) {
    const auto rows = eval_routing(tuned, {{"dialogue", stage_probes(run.config)},
                                           {"t2m", stage_t2m_test(run.config)},
                                           {"pose", stage_pose_test(run.config)}});
    EvalReport r = new_report("routing", run);
    r.csv_header = {"task"};
    for (Index i = 0; i < tuned.config().experts; ++i) r.csv_header.push_back("alpha" + std::to_string(i));
    for (const auto& row : rows) {
      std::vector<std::string> cells = {row.task};
      for (double a : row.mean_alpha) cells.push_back(format_metric(a));
      r.csv_rows.push_back(cells);
      r.metrics[row.task + "_alpha0"] = row.mean_alpha.front();
    }
    emit(run, r);
  }
  if (wants("t2m")) {
    const PartTokenizer<float> motion = need_tokenizer(motion_path, "--motion-tok");
    const SpecLibrary library(SkeletonSpec::toy17());
    const T2mResult t = eval_t2m(tuned, motion, stage_t2m_test(run.config), library, ec, seed);
    EvalReport r = new_report("t2m", run);
    r.metrics["samples"] = t.samples;
    r.metrics["undecodable"] = t.undecodable;
    r.metrics["gait_accuracy"] = t.gait_accuracy;
    r.metrics["spec_accuracy"] = t.spec_accuracy;
    r.metrics["top1"] = t.top1;
    r.metrics["top2"] = t.top2;
    r.metrics["top3"] = t.top3;
    r.metrics["generation_mse"] = t.generation_mse;
    r.metrics["tokenizer_mse"] = t.tokenizer_mse;
    r.metrics["diversity"] = t.diversity;
    emit(run, r);
  }
  if (wants("pose")) {
    const PartTokenizer<float> pose = need_tokenizer(pose_path, "--pose-tok");
    const PoseResult p = eval_pose(tuned, pose, stage_pose_test(run.config), SkeletonSpec::toy17());
    EvalReport r = new_report("pose", run);
    r.metrics["samples"] = p.samples;
    r.metrics["undecodable"] = p.undecodable;
    r.metrics["degenerate"] = p.degenerate;
    r.metrics["mpjpe"] = p.mpjpe;
    r.metrics["pa_mpjpe"] = p.pa_mpjpe;
    r.metrics["mean_bone_length"] = p.mean_bone;
    r.csv_header = {"sample", "mpjpe", "pa_mpjpe"};
    for (std::size_t i = 0; i < p.per_sample_mpjpe.size(); ++i) {
      r.csv_rows.push_back({std::to_string(i), format_metric(p.per_sample_mpjpe[i]), format_metric(p.per_sample_pa[i])});
    }
    emit(run, r);
  }
  return 0;
}

// bench --------------------------------------------------------------------

std::pair<Index, Index> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      const Index n = std::stol(s);
      return {n, n};
    }
    return {std::stol(s.substr(0, dots)), std::stol(s.substr(dots + 2))};
  } catch (const std::exception&) {
    throw std::invalid_argument("--experts expects N or A..B, got '" + s + "'");
  }
}

int cmd_bench(Common c, const std::string& experts, const std::string& lm_path, const std::string& motion_path,
              const std::string& pose_path) {
  if (!experts.empty()) {
    const auto [lo, hi] = parse_range(experts);
    c.sets.push_back("bench.min_experts=" + std::to_string(lo));
    c.sets.push_back("bench.max_experts=" + std::to_string(hi));
  }
  const Run run = open_run(c, "bench", {lm_path, motion_path, pose_path});
  const ToyLm<float> base = load_lm(lm_path);
  const MotionLm<float> reference = stage_motion_lm(run.config, base);
  const BenchConfig bc = bench_config(run.config);
  ScalingInputs inputs;
  inputs.tune = tune_config(run.config);
  inputs.eval = eval_config(run.config);
  std::optional<TuneData> data;
  std::optional<PartTokenizer<float>> motion;
  std::vector<InstructionSample> t2m_test;
  std::optional<SpecLibrary> library;
  if (!motion_path.empty() && !pose_path.empty()) {
    motion = load_tokenizer(motion_path);
    const PartTokenizer<float> pose = load_tokenizer(pose_path);
    data = stage_tune_data(run.config, reference, *motion, pose);
    inputs.data = &*data;
    inputs.tokenizer = &*motion;
    t2m_test = stage_t2m_test(run.config);
    inputs.t2m_test = &t2m_test;
    library.emplace(SkeletonSpec::toy17());
    inputs.library = &*library;
  }
  const auto rows = scaling_bench(reference.lm(), tune_config(run.config).model, bc, inputs,
                                  Rng(config_seed(run.config)).derive("bench").seed());
  EvalReport r = new_report("bench", run);
  r.csv_header = {"experts", "params", "train_s_per_step", "infer_ms_per_seq", "t2m_top1"};
  for (const auto& row : rows) {
    const std::string n = std::to_string(row.experts);
    r.metrics["params_" + n] = row.params;
    r.metrics["formula_" + n] = row.formula;
    if (row.t2m_top1 >= 0) r.metrics["t2m_top1_" + n] = row.t2m_top1;
    r.timing["infer_ms_" + n] = row.infer_ms;
    if (row.train_seconds >= 0) r.timing["train_s_per_step_" + n] = row.train_seconds;
    r.csv_rows.push_back({n, std::to_string(row.params), row.train_seconds < 0 ? "" : seconds(row.train_seconds),
                          format_metric(row.infer_ms), row.t2m_top1 < 0 ? "" : format_metric(row.t2m_top1)});
  }
  emit(run, r);
  return 0;
}

// ablate -------------------------------------------------------------------

int cmd_ablate(const Common& c, const std::string& out_part) {
  const Run run = open_run(c, "ablate", {});
  const SkeletonSpec skeleton = SkeletonSpec::toy17();
  const TokenizerTrainConfig tc = tokenizer_config(run.config, "tokenizer");
  const auto train = motion_clips(stage_samples(run.config, "t2m", tc.train_samples, Split::train), skeleton);
  const auto test = motion_clips(stage_samples(run.config, "t2m", tc.test_samples, Split::val), skeleton);
  PartTokenizer<float> part;
  const auto arms = ablate_tokenizer(skeleton, tc, ablate_config(run.config).steps, train, test,
                                     Rng(config_seed(run.config)).derive("tokenizer").seed(), &part);
  if (!out_part.empty()) save_tokenizer(out_part, part);
  EvalReport r = new_report("ablate", run);
  r.csv_header = {"arm", "parts", "codebook_size", "codebook_entries", "steps", "heldout_mse"};
  for (const auto& a : arms) {
    r.csv_rows.push_back({a.name, std::to_string(a.parts), std::to_string(a.codebook_size),
                          std::to_string(a.codebook_entries), std::to_string(a.steps), format_metric(a.heldout_mse)});
    r.metrics[a.name] = a.heldout_mse;
  }
  emit(run, r);
  return 0;
}

// report -------------------------------------------------------------------

int cmd_report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("no run directory '" + dir + "'");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& csv : files) {
    std::ifstream in(csv);
    std::cout << "## " << csv.stem().string() << "\n\n";
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      std::string row = "| ";
      for (char ch : line) row += ch == ',' ? std::string(" | ") : std::string(1, ch);
      row += " |";
      if (header) {
        std::cout << row << '\n' << "|";
        for (char ch : line)
          if (ch == ',') std::cout << "---|";
        std::cout << "---|\n";
        header = false;
      } else {
        std::cout << row << '\n';
      }
    }
    std::cout << '\n';
    const fs::path json_path = csv.parent_path() / (csv.stem().string() + ".json");
    if (fs::exists(json_path)) {
      std::ifstream js(json_path);
      const auto j = ordered_json::parse(js);
      std::cout << "metrics: " << j.at("metrics").dump() << "\n\n";
    }
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json" || fs::exists(fs::path(e.path()).replace_extension(".csv"))) continue;
    const std::string stem = e.path().stem().string();
    if (stem.rfind("run_", 0) == 0 || stem == "resolved_config") continue;
    std::ifstream js(e.path());
    const auto j = ordered_json::parse(js);
    std::cout << "## " << stem << "\n\nmetrics: " << j.at("metrics").dump() << "\n\n";
  }
  return 0;
}

std::string help_footer() {
  std::string out = "Reference defaults:\n";
  for (const auto& [key, text] : config_help()) out += "  " + key + ": " + text + "\n";
  return out;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"moelora: MoE-LoRA motion-language toolkit"};
  app.footer(help_footer());
  app.require_subcommand(1);

  std::string task, split = "train", out, kind = "motion", lm, tuned, without, motion, pose, experts, dir;
  Index n = 0;
  std::uint64_t seed = 7;
  std::vector<std::string> what{"all"};

  Common gen_common, tok_common, pre_common, tune_common, eval_common, bench_common, ablate_common;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
  gen->add_option("--task", task, "base, t2m, pose or gating")->required();
  gen->add_option("--n", n, "number of samples")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--split", split, "train, val or test");
  gen->add_option("--out", out, "output file")->required();

  auto* tok = app.add_subcommand("train-tokenizer", "train the motion or pose tokenizer");
  add_common(tok, tok_common);
  tok->add_option("--kind", kind, "motion or pose");
  tok->add_option("--out", out, "checkpoint path");

  auto* pre = app.add_subcommand("pretrain-lm", "pretrain the base language model on the base tasks");
  add_common(pre, pre_common);
  pre->add_option("--out", out, "checkpoint path");

  auto* tune = app.add_subcommand("tune", "MoE-LoRA instruction tuning");
  add_common(tune, tune_common);
  tune->add_option("--lm", lm, "pretrained model checkpoint")->required();
  tune->add_option("--motion-tok", motion, "motion tokenizer checkpoint")->required();
  tune->add_option("--pose-tok", pose, "pose tokenizer checkpoint")->required();
  tune->add_option("--out", out, "checkpoint path");

  auto* eval = app.add_subcommand("eval", "forgetting, routing, t2m and pose evaluation");
  add_common(eval, eval_common);
  eval->add_option("--what", what, "all, forgetting, routing, t2m, pose");
  eval->add_option("--lm", lm, "pretrained model checkpoint (forgetting)");
  eval->add_option("--tuned", tuned, "tuned model checkpoint")->required();
  eval->add_option("--tuned-without", without, "model tuned without the gating loss (forgetting)");
  eval->add_option("--motion-tok", motion, "motion tokenizer checkpoint (t2m)");
  eval->add_option("--pose-tok", pose, "pose tokenizer checkpoint (pose)");

  auto* bench = app.add_subcommand("bench", "parameter, training-time and latency scaling over expert counts");
  add_common(bench, bench_common);
  bench->add_option("--experts", experts, "trainable expert range, e.g. 1..8");
  bench->add_option("--lm", lm, "pretrained model checkpoint")->required();
  bench->add_option("--motion-tok", motion, "motion tokenizer (enables training timing)");
  bench->add_option("--pose-tok", pose, "pose tokenizer (enables training timing)");

  auto* ablate = app.add_subcommand("ablate", "part-based versus whole-body tokenizer ablation");
  add_common(ablate, ablate_common);
  ablate->add_option("--out-part", out, "also save the part-based tokenizer here");

  auto* report = app.add_subcommand("report", "print every table of a run directory");
  report->add_option("--dir", dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (gen->parsed()) return cmd_gen_data(task, n, seed, split, out);
    if (tok->parsed()) return cmd_train_tokenizer(tok_common, kind, out);
    if (pre->parsed()) return cmd_pretrain(pre_common, out);
    if (tune->parsed()) return cmd_tune(tune_common, lm, motion, pose, out);
    if (eval->parsed()) return cmd_eval(eval_common, what, lm, tuned, without, motion, pose);
    if (bench->parsed()) return cmd_bench(bench_common, experts, lm, motion, pose);
    if (ablate->parsed()) return cmd_ablate(ablate_common, out);
    if (report->parsed()) return cmd_report(dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace moelora
