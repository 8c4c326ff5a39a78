// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// budgets are pinned below. Exit status is non-zero when any criterion fails.

#include "grad_suite.hpp"
#include "moelora/cli/cli.hpp"
#include "moelora/tokenizer/codebook.hpp"
#include "moelora/train/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

using namespace moelora;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets (seconds).
constexpr double kPathTolerance = 1e-5;
constexpr double kMinPretrainAccuracy = 0.90;
constexpr double kMaxRelativeDrop = 0.10;
constexpr double kMaxRetainedWithout = 0.50;
constexpr double kMinDialogueAlpha0 = 0.95;
constexpr double kMinTop1 = 0.156;
constexpr double kMinGaitAccuracy = 0.80;
constexpr double kMpjpeBoneFraction = 0.25;
constexpr Index kVqCodebook = 512;
constexpr int kTrials = 100;
constexpr int kVqPairs = 1000;
constexpr double kBudgetQuick = 60;
constexpr double kBudgetGrad = 300;
constexpr double kBudgetForgetting = 3600;
constexpr double kBudgetRouting = 300;
constexpr double kBudgetAblation = 2700;
constexpr double kBudgetScaling = 900;
constexpr double kBudgetT2m = 1800;
constexpr double kBudgetPose = 600;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

struct Outcome {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Outcome> outcomes;

void record(int id, const std::string& name, bool pass, const std::string& detail) {
  outcomes.push_back({id, name, pass, detail});
  std::printf("[%2d] %s %s: %s\n", id, pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

void note(const std::string& s) {
  std::printf("      %s\n", s.c_str());
  std::fflush(stdout);
}

/// The configuration every training criterion runs with.
RunConfig acceptance_config() {
  RunConfig c = default_config();
  const nlohmann::json tokenizer = {{"model_dim", 64}, {"code_dim", 64}, {"codebook_size", 64}, {"mlp_dim", 128},
                                    {"dead_window", 50}, {"lr", 1e-3},   {"steps", 1000}};
  merge_config(c, {{"tokenizer", tokenizer}, {"pose_tokenizer", tokenizer}, {"tune", {{"steps", 1000}}},
                   {"ablate", {{"steps", 1000}}}},
               "acceptance");
  validate_config(c);
  return c;
}

std::map<std::string, Mat<float>> named_values(ToyLm<float> lm) {
  std::map<std::string, Mat<float>> out;
  lm.visit([&](const std::string& name, Tensor<float>& t) { out[name] = t.value(); });
  return out;
}

// 1 ------------------------------------------------------------------------

void zero_expert_identity(const ToyLm<float>& pretrained, const MotionLm<float>& tuned, const fs::path& work) {
  const auto start = Clock::now();
  const fs::path path = work / "pretrained.ckpt";
  {
    ToyLm<float> copy = pretrained.clone();
    Checkpoint ckpt;
    copy.save(ckpt);
    ckpt.save(path.string());
  }
  const ToyLm<float> reloaded = ToyLm<float>::from_checkpoint(Checkpoint::load(path.string()));
  const auto e0 = ExpertMixture<float>::one_hot(tuned.lm().bank().num_experts(), 0);
  const auto base = named_values(reloaded.clone());
  const auto merged = named_values(tuned.lm().merged(e0));
  Index compared = 0, mismatched = 0;
  for (const auto& [name, value] : base) {
    const auto it = merged.find(name);
    ++compared;
    if (it == merged.end() || it->second.rows() != value.rows() || it->second.cols() != value.cols() ||
        it->second != value) {
      ++mismatched;
    }
  }
  Rng rng(101);
  const Index text = reloaded.vocab().text_size();
  int logit_mismatch = 0;
  NoGradGuard guard;
  for (int t = 0; t < kTrials; ++t) {
    std::vector<Index> ids(static_cast<std::size_t>(1 + rng.below(reloaded.config().context)));
    for (auto& id : ids) id = rng.below(text);
    const Mat<float> want = reloaded.forward(ids).value();
    const Mat<float> got = tuned.lm().forward(ids, &e0).value();
    if (got.rows() != want.rows() || Mat<float>(got.leftCols(text)) != want) ++logit_mismatch;
  }
  const double secs = since(start);
  record(1, "zero-expert identity", mismatched == 0 && compared > 0 && logit_mismatch == 0 && secs < kBudgetQuick,
         fmt("%ld/%ld base tensors differ after merging e0; %d/%d inputs with V_T logits differing; %.1fs",
             (long)mismatched, (long)compared, logit_mismatch, kTrials, secs));
}

// 2 ------------------------------------------------------------------------

void path_equivalence() {
  const auto start = Clock::now();
  Rng rng(202);
  double worst = 0;
  for (int t = 0; t < kTrials; ++t) {
    const Index d_in = 4 + rng.below(60);
    const Index d_out = 4 + rng.below(60);
    const Index rank = 1 + rng.below(std::min(d_in, d_out) - 1);
    const Index experts = 2 + rng.below(8);
    const Index rows = 1 + rng.below(32);
    auto bank = init_bank<float>({{"w", d_in, d_out}}, rank, experts, rng.engine()());
    bank.visit([&](const std::string&, Tensor<float>& p) {
      if (p.requires_grad()) p.mutable_value() = rng.normal_matrix<float>(p.value().rows(), p.value().cols(), 0.5);
    });
    std::vector<float> alpha(static_cast<std::size_t>(experts));
    double total = 0;
    for (auto& a : alpha) total += (a = static_cast<float>(std::exp(rng.normal())));
    for (auto& a : alpha) a = static_cast<float>(a / total);
    const auto mixture = ExpertMixture<float>::from_values(alpha);
    const Tensor<float> w({d_in, d_out}, rng.normal_matrix<float>(d_in, d_out, 1.0));
    const Tensor<float> x({rows, d_in}, rng.normal_matrix<float>(rows, d_in, 1.0));
    const auto& list = bank.layer("w").experts;
    const Mat<float> dynamic = moe_linear_forward<float>(x, w, list, mixture).value();
    const Mat<float> merged = matmul(x, mix_weights<float>(w, list, mixture)).value();
    worst = std::max(worst, static_cast<double>((dynamic - merged).norm() / merged.norm()));
  }
  const double secs = since(start);
  record(2, "dynamic vs merged paths", worst < kPathTolerance && secs < kBudgetQuick,
         fmt("worst relative error %.3g over %d trials (tolerance %.0e); %.1fs", worst, kTrials, kPathTolerance, secs));
}

// 3 ------------------------------------------------------------------------

void gradient_suite() {
  const auto start = Clock::now();
  double worst = 0;
  std::string worst_case;
  int failures = 0;
  for (const auto& c : moelora::testing::gradient_cases()) {
    for (std::uint64_t seed = 1; seed <= static_cast<std::uint64_t>(moelora::testing::kGradSeeds); ++seed) {
      const auto r = c.run(seed);
      if (!(r.max_rel_error < moelora::testing::kGradTolerance)) ++failures;
      if (!(r.max_rel_error <= worst)) {
        worst = r.max_rel_error;
        worst_case = c.name;
      }
    }
  }
  const double secs = since(start);
  record(3, "finite-difference gradients", failures == 0 && secs < kBudgetGrad,
         fmt("%zu cases x %d seeds, %d failures, worst %.3g (%s); %.1fs", moelora::testing::gradient_cases().size(),
             moelora::testing::kGradSeeds, failures, worst, worst_case.c_str(), secs));
}

// 4 ------------------------------------------------------------------------

Index scan(const Mat<float>& entries, const Mat<float>& v) {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < entries.rows(); ++k) {
    double d = 0;
    for (Index c = 0; c < entries.cols(); ++c) {
      const double diff = static_cast<double>(v(0, c)) - static_cast<double>(entries(k, c));
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

void vq_oracle() {
  const auto start = Clock::now();
  Rng rng(404);
  int mismatches = 0;
  for (int t = 0; t < kVqPairs; ++t) {
    const Index dim = 1 + rng.below(64);
    PartCodebook<float> book(kVqCodebook, dim, true);
    book.entries.mutable_value() = rng.normal_matrix<float>(kVqCodebook, dim, 1.0);
    const Mat<float> v = rng.normal_matrix<float>(1, dim, 1.0);
    const auto r = quantize(Tensor<float>({dim}, v), book);
    if (r.index != scan(book.entries.value(), v)) ++mismatches;
  }
  // Ties: duplicated rows and mirrored rows at exactly representable offsets.
  int tie_failures = 0;
  for (int t = 0; t < 50; ++t) {
    const Index dim = 1 + rng.below(8);
    PartCodebook<float> book(kVqCodebook, dim, true);
    book.entries.mutable_value() = Mat<float>::Constant(kVqCodebook, dim, 64.0f);
    Mat<float> v(1, dim);
    for (Index c = 0; c < dim; ++c) v(0, c) = static_cast<float>(rng.below(16)) * 0.25f;
    const Index first = rng.below(kVqCodebook / 2);
    const Index second = first + 1 + rng.below(kVqCodebook / 2 - 1);
    const Index third = second + rng.below(kVqCodebook - second);
    book.entries.mutable_value().row(second) = v.array() + 0.125f;
    book.entries.mutable_value().row(first) = v.array() - 0.125f;
    if (third != second) book.entries.mutable_value().row(third) = book.entries.value().row(second);
    const auto r = quantize(Tensor<float>({dim}, v), book);
    if (r.index != first || scan(book.entries.value(), v) != first) ++tie_failures;
  }
  const double secs = since(start);
  record(4, "quantizer argmin oracle", mismatches == 0 && tie_failures == 0 && secs < kBudgetQuick,
         fmt("%d/%d random pairs differ from the scan at K=%ld; %d/50 tie cases not resolved to the lowest index; %.1fs",
             mismatches, kVqPairs, (long)kVqCodebook, tie_failures, secs));
}

// 5 ------------------------------------------------------------------------

void part_locality(const RunConfig& config, const PartTokenizer<float>& pose_tok,
                   const PartTokenizer<float>& motion_tok) {
  const auto start = Clock::now();
  const SkeletonSpec sk = SkeletonSpec::toy17();
  const auto samples = stage_samples(config, "pose", kTrials, Split::test, "acceptance/locality");
  Rng rng(505);
  int leaks = 0, inert = 0;
  NoGradGuard guard;
  for (int t = 0; t < kTrials; ++t) {
    const Pose pose = regenerate_pose(samples[static_cast<std::size_t>(t)], sk);
    const Index part = t % sk.parts();
    Pose moved = pose;
    for (Index j : sk.joints_of(part)) moved.values.row(j) += rng.normal_matrix<double>(1, 3, 0.1);
    const auto flat = [&](const Pose& p) { return Mat<double>(p.values.reshaped<Eigen::RowMajor>(1, sk.joints * 3)); };
    const Mat<float> z0 = pose_tok.spatial_encode(Tensor<float>({sk.joints, 3}, pose_tok.normalize(flat(pose))), 1).value();
    const Mat<float> z1 = pose_tok.spatial_encode(Tensor<float>({sk.joints, 3}, pose_tok.normalize(flat(moved))), 1).value();
    const auto k0 = pose_tok.tokenize_pose(pose);
    const auto k1 = pose_tok.tokenize_pose(moved);
    for (Index p = 0; p < sk.parts(); ++p) {
      if (p == part) continue;
      if (z0.row(p) != z1.row(p) || !(k0[static_cast<std::size_t>(p)] == k1[static_cast<std::size_t>(p)])) ++leaks;
    }
    if (z0.row(part) == z1.row(part)) ++inert;
  }
  // The same property for the temporal tokenizer on 16-frame motion windows.
  const auto clips = motion_clips(stage_samples(config, "t2m", kTrials, Split::test, "acceptance/locality"), sk);
  int motion_leaks = 0;
  for (int t = 0; t < kTrials; ++t) {
    MotionSequence m;
    m.frames = clips[static_cast<std::size_t>(t)].topRows(16);
    const Index part = t % sk.parts();
    MotionSequence moved = m;
    for (Index j : sk.joints_of(part)) moved.frames.middleCols(j * 3, 3) += rng.normal_matrix<double>(16, 3, 0.1);
    const Mat<float> z0 = motion_tok.encode(Tensor<float>({16 * sk.joints, 3}, motion_tok.normalize(m.frames)), 1, 16).value();
    const Mat<float> z1 =
        motion_tok.encode(Tensor<float>({16 * sk.joints, 3}, motion_tok.normalize(moved.frames)), 1, 16).value();
    const auto k0 = motion_tok.tokenize_motion(m);
    const auto k1 = motion_tok.tokenize_motion(moved);
    for (Index r = 0; r < z0.rows(); ++r) {
      if (r % sk.parts() == part) continue;
      if (z0.row(r) != z1.row(r) || !(k0[static_cast<std::size_t>(r)] == k1[static_cast<std::size_t>(r)])) ++motion_leaks;
    }
  }
  const double secs = since(start);
  record(5, "part locality", leaks == 0 && inert == 0 && motion_leaks == 0 && secs < kBudgetQuick,
         fmt("%d other-part embedding/token changes over %d poses (%d perturbations unseen by their own part); "
             "%d over %d motion windows; %.1fs",
             leaks, kTrials, inert, motion_leaks, kTrials, secs));
}

// 12 -----------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "moelora");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Every command of the tool, twice, at a small scale; metrics and
/// checkpoints must match byte for byte.
void determinism(const fs::path& work) {
  const auto start = Clock::now();
  const nlohmann::json tok = {{"model_dim", 16}, {"heads", 2},       {"layers", 1},         {"mlp_dim", 32},
                              {"code_dim", 8},   {"codebook_size", 16}, {"steps", 40},     {"train_samples", 60},
                              {"test_samples", 10}, {"dead_window", 8}};
  nlohmann::json pose = tok;
  pose["batch"] = 16;
  const nlohmann::json cfg = {
      {"tokenizer", tok},
      {"pose_tokenizer", pose},
      {"lm", {{"layers", 2}, {"heads", 2}, {"model_dim", 32}, {"mlp_dim", 64}, {"steps", 60}, {"batch", 8},
              {"train_samples", 400}, {"probe_samples", 20}}},
      {"adapter", {{"experts", 3}, {"rank", 2}, {"gate_dim", 16}, {"gate_hidden", 16}}},
      {"tune", {{"steps", 10}, {"batch", 8}, {"micro_batch", 2}, {"t2m_samples", 40}, {"pose_samples", 40},
                {"gate_samples", 40}}},
      {"eval", {{"t2m_samples", 10}, {"pose_samples", 10}, {"probe_samples", 20}, {"routing_samples", 10},
                {"diversity_subset", 10}}},
      {"bench", {{"runs", 5}, {"warmup", 1}, {"train_steps", 1}, {"tune_steps", 2}}},
      {"ablate", {{"steps", 20}}},
  };
  const fs::path cfg_path = work / "determinism.json";
  std::ofstream(cfg_path) << cfg.dump(2);
  int failures = 0;
  const auto run_all = [&](const fs::path& dir) {
    const std::vector<std::string> common = {"--config", cfg_path.string(), "--run-dir", dir.string()};
    const auto with = [&](std::vector<std::string> args) {
      args.insert(args.end(), common.begin(), common.end());
      if (cli(args) != 0) ++failures;
    };
    const std::string lm = (dir / "lm.ckpt").string(), mt = (dir / "motion_tokenizer.ckpt").string(),
                      pt = (dir / "pose_tokenizer.ckpt").string();
    for (const std::string task : {"base", "t2m", "pose", "gating"}) {
      if (cli({"gen-data", "--task", task, "--n", "50", "--split", "train", "--out", (dir / (task + ".jsonl")).string()}) != 0)
        ++failures;
    }
    with({"train-tokenizer", "--kind", "motion"});
    with({"train-tokenizer", "--kind", "pose"});
    with({"pretrain-lm"});
    with({"tune", "--lm", lm, "--motion-tok", mt, "--pose-tok", pt});
    with({"tune", "--lm", lm, "--motion-tok", mt, "--pose-tok", pt, "--set", "tune.gating_loss=false"});
    with({"eval", "--lm", lm, "--tuned", (dir / "tuned.ckpt").string(), "--tuned-without",
          (dir / "tuned_without_gating.ckpt").string(), "--motion-tok", mt, "--pose-tok", pt});
    with({"bench", "--experts", "1..3", "--lm", lm, "--motion-tok", mt, "--pose-tok", pt});
    with({"ablate"});
  };
  const fs::path a = work / "determinism_a", b = work / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  run_all(a);
  run_all(b);
  int compared = 0, differing = 0;
  std::string first_diff;
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string ext = e.path().extension().string();
    const fs::path other = b / e.path().filename();
    std::string x, y;
    if (ext == ".json" && e.path().stem().string().rfind("run_", 0) != 0 && e.path().stem() != "resolved_config") {
      const auto ja = nlohmann::json::parse(read_file(e.path()));
      if (!ja.contains("metrics")) continue;
      x = ja["metrics"].dump();
      y = fs::exists(other) ? nlohmann::json::parse(read_file(other))["metrics"].dump() : "";
    } else if (ext == ".ckpt" || ext == ".jsonl") {
      x = read_file(e.path());
      y = fs::exists(other) ? read_file(other) : "";
    } else {
      continue;
    }
    ++compared;
    if (x != y) {
      ++differing;
      if (first_diff.empty()) first_diff = e.path().filename().string();
    }
  }
  record(12, "determinism", failures == 0 && compared >= 20 && differing == 0,
         fmt("%d command failures; %d artifacts compared across reruns, %d differ%s%s; %.1fs", failures, compared,
             differing, first_diff.empty() ? "" : " e.g. ", first_diff.c_str(), since(start)));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "moelora_acceptance";
  fs::create_directories(work);
  const RunConfig config = acceptance_config();
  std::printf("acceptance run, config %s, work dir %s\n", config_fingerprint(config).c_str(), work.string().c_str());
  std::fflush(stdout);

  path_equivalence();
  gradient_suite();
  vq_oracle();

  // Shared training stages.
  auto t = Clock::now();
  const ToyLm<float> pretrained = stage_pretrain(config);
  note(fmt("pretrained the language model in %.0fs", since(t)));
  t = Clock::now();
  const TokenizerRun motion = stage_train_tokenizer(config, "tokenizer");
  const TokenizerRun pose = stage_train_tokenizer(config, "pose_tokenizer");
  note(fmt("trained tokenizers in %.0fs (held-out mse motion %.4g, pose %.4g)", since(t), motion.heldout_mse,
           pose.heldout_mse));
  part_locality(config, pose.tokenizer, motion.tokenizer);

  t = Clock::now();
  const TuneRun with = stage_tune(config, pretrained, motion.tokenizer, pose.tokenizer);
  const double tune_with_s = since(t);
  RunConfig without_config = config;
  without_config["tune"]["gating_loss"] = false;
  t = Clock::now();
  const TuneRun without = stage_tune(without_config, pretrained, motion.tokenizer, pose.tokenizer);
  const double tune_without_s = since(t);
  note(fmt("tuned with L_gat in %.0fs, without in %.0fs", tune_with_s, tune_without_s));

  zero_expert_identity(pretrained, with.model, work);

  // 6
  t = Clock::now();
  const auto probes = stage_probes(config);
  const ForgettingResult f = eval_forgetting(pretrained, with.model, &without.model, probes);
  const double forgetting_s = tune_with_s + tune_without_s + since(t);
  record(6, "forgetting",
         f.before >= kMinPretrainAccuracy && f.relative_drop() <= kMaxRelativeDrop &&
             f.retained_without() < kMaxRetainedWithout && forgetting_s <= kBudgetForgetting,
         fmt("accuracy %.3f before, %.3f with L_gat (drop %.1f%%), %.3f without (%.1f%% retained); %.0fs", f.before,
             f.after, 100 * f.relative_drop(), f.after_without, 100 * f.retained_without(), forgetting_s));

  // 7
  t = Clock::now();
  const auto t2m_test = stage_t2m_test(config);
  const auto routing = eval_routing(with.model, {{"dialogue", probes}, {"t2m", t2m_test}});
  const double dialogue = routing[0].mean_alpha.front(), t2m_alpha = routing[1].mean_alpha.front();
  const double routing_s = since(t);
  record(7, "routing", dialogue > kMinDialogueAlpha0 && t2m_alpha < dialogue && routing_s < kBudgetRouting,
         fmt("mean alpha_0 %.4f on held-out dialogue, %.4f on t2m; %.1fs", dialogue, t2m_alpha, routing_s));

  // 10
  t = Clock::now();
  const SpecLibrary library(SkeletonSpec::toy17());
  const T2mResult t2m = eval_t2m(with.model, motion.tokenizer, t2m_test, library, eval_config(config),
                                 Rng(config_seed(config)).derive("eval").seed());
  const double t2m_s = tune_with_s + since(t);
  record(10, "text-to-motion", t2m.top1 >= kMinTop1 && t2m.gait_accuracy >= kMinGaitAccuracy && t2m_s <= kBudgetT2m,
         fmt("top-1 %.3f among %ld candidates, gait accuracy %.3f, %ld/%ld undecodable; %.0fs including tuning", t2m.top1,
             (long)eval_config(config).retrieval_candidates, t2m.gait_accuracy, (long)t2m.undecodable,
             (long)t2m.samples, t2m_s));

  // 11
  t = Clock::now();
  const PoseResult p = eval_pose(with.model, pose.tokenizer, stage_pose_test(config), SkeletonSpec::toy17());
  int pa_violations = 0;
  for (std::size_t i = 0; i < p.per_sample_mpjpe.size(); ++i) {
    if (std::isnan(p.per_sample_pa[i]) || p.per_sample_pa[i] > p.per_sample_mpjpe[i]) ++pa_violations;
  }
  const double pose_s = since(t);
  record(11, "pose estimation",
         p.mpjpe < kMpjpeBoneFraction * p.mean_bone && pa_violations == 0 && p.samples > 0 && pose_s < kBudgetPose,
         fmt("MPJPE %.4f vs limit %.4f, PA-MPJPE %.4f, %d samples with PA > MPJPE or undefined, %ld undecodable; %.1fs",
             p.mpjpe, kMpjpeBoneFraction * p.mean_bone, p.pa_mpjpe, pa_violations, (long)p.undecodable, pose_s));

  // 8
  t = Clock::now();
  {
    const SkeletonSpec sk = SkeletonSpec::toy17();
    const TokenizerTrainConfig tc = tokenizer_config(config, "tokenizer");
    const auto train = motion_clips(stage_samples(config, "t2m", tc.train_samples, Split::train), sk);
    const auto test = motion_clips(stage_samples(config, "t2m", tc.test_samples, Split::val), sk);
    const auto arms = ablate_tokenizer(sk, tc, ablate_config(config).steps, train, test,
                                       Rng(config_seed(config)).derive("tokenizer").seed());
    const double secs = since(t);
    record(8, "tokenizer ablation",
           arms.size() == 3 && arms[0].heldout_mse < arms[1].heldout_mse && arms[0].heldout_mse < arms[2].heldout_mse &&
               secs <= kBudgetAblation,
           fmt("held-out mse %s %.4g, %s %.4g, %s %.4g at %ld steps; %.0fs", arms[0].name.c_str(), arms[0].heldout_mse,
               arms[1].name.c_str(), arms[1].heldout_mse, arms[2].name.c_str(), arms[2].heldout_mse,
               (long)arms[0].steps, secs));
  }

  // 9
  t = Clock::now();
  {
    BenchConfig bc = bench_config(config);
    bc.min_experts = 1;
    bc.max_experts = 8;
    const MotionLm<float> reference = stage_motion_lm(config, pretrained);
    const MotionLmConfig mc = tune_config(config).model;
    const auto rows = scaling_bench(reference.lm(), mc, bc, ScalingInputs{},
                                    Rng(config_seed(config)).derive("bench").seed());
    // Oracle: per transformer layer four d x d attention projections and the
    // d x m, m x d MLP pair; the gate is gate_dim -> hidden -> n + 1.
    const LmConfig& lc = reference.lm().config();
    const Index per_layer = 4 * (2 * lc.model_dim) + 2 * (lc.model_dim + lc.mlp_dim);
    int count_mismatch = 0, inversions = 0;
    std::string latencies;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Index n = rows[i].experts;
      const Index expected = n * mc.rank * lc.layers * per_layer + mc.gate_dim * mc.gate_hidden + mc.gate_hidden +
                             mc.gate_hidden * (n + 1) + (n + 1);
      if (rows[i].params != expected) ++count_mismatch;
      if (i > 0 && rows[i].infer_ms < rows[i - 1].infer_ms) ++inversions;
      latencies += fmt("%s%.3f", i ? " " : "", rows[i].infer_ms);
    }
    const double secs = since(t);
    record(9, "scaling",
           rows.size() == 8 && count_mismatch == 0 && inversions == 0 && secs < kBudgetScaling,
           fmt("%d/8 parameter counts off the formula; median latency ms for 1..8 experts [%s], %d decreases; %.0fs",
               count_mismatch, latencies.c_str(), inversions, secs));
  }

  determinism(work);

  std::sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  std::printf("\nsummary\n");
  int failed = 0;
  for (const auto& o : outcomes) {
    std::printf("criterion %2d %s  %s\n", o.id, o.pass ? "PASS" : "FAIL", o.name.c_str());
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(outcomes.size()) - failed, outcomes.size());
  return failed == 0 && outcomes.size() == 12 ? 0 : 1;
}
