// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/train/experiments.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace moelora;
using Catch::Approx;

namespace {

Mat<double> random_joints(Rng& rng, Index joints = 17) { return rng.normal_matrix<double>(joints, 3, 0.3); }

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

/// Tiny extended model and hand-built tuning data over its vocabulary.
struct TinySetup {
  MotionLm<float> model;
  TuneData data;
};

TinySetup tiny_setup() {
  LmConfig lc;
  lc.layers = 1;
  lc.heads = 2;
  lc.model_dim = 16;
  lc.mlp_dim = 32;
  lc.context = 48;
  ToyLm<float> lm(Vocabulary::base(), lc, 1);
  lm.extend(5, 4, 2);
  MotionLmConfig mc;
  mc.experts = 3;
  mc.rank = 2;
  mc.gate_dim = 8;
  mc.gate_hidden = 8;
  mc.feature_dim = kPoseFeatureDim;
  TinySetup s{MotionLm<float>(lm, mc, 3), {}};
  const Vocabulary& v = s.model.lm().vocab();
  const auto sk = SkeletonSpec::toy17();
  Rng rng(4);
  std::vector<InstructionSample> t2m, pose;
  for (const auto& m : gen_motion_dataset(8, sk, 5)) {
    InstructionSample x = m.sample;
    x.spec->frames = 16;
    for (Index slot = 0; slot < 4; ++slot)
      for (Index p = 0; p < 5; ++p) x.response_ids.push_back(v.motion_id(p, rng.below(4)));
    t2m.push_back(x);
  }
  for (const auto& p : gen_pose_samples(8, sk, 6)) {
    InstructionSample x = p.sample;
    for (Index part = 0; part < 5; ++part) x.response_ids.push_back(v.pose_id(part, rng.below(4)));
    pose.push_back(x);
  }
  s.data.t2m = make_items(t2m, v, 1);
  s.data.pose = make_items(pose, v, 1);
  s.data.gate = make_items(gen_base_lang_task(8, 7), v, 1);
  s.data.heldout_gate = make_items(gen_base_lang_task(4, 7, Split::val), v, 1);
  return s;
}

TuneConfig tiny_tune(Index micro) {
  TuneConfig c;
  c.model.experts = 3;
  c.batch = 32;
  c.micro_batch = micro;
  c.steps = 2;
  c.lr = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("defaults follow the reference hyperparameters", "[train][config]") {
  const auto c = default_config();
  CHECK(c["tokenizer"]["codebook_size"] == 512);
  CHECK(c["tokenizer"]["code_dim"] == 512);
  CHECK(c["tokenizer"]["temporal_stages"] == 2);
  CHECK(c["tokenizer"]["commitment"] == 0.02);
  CHECK(c["tokenizer"]["lr"] == 2e-4);
  CHECK(c["adapter"]["experts"] == 5);
  CHECK(c["adapter"]["rank"] == 8);
  CHECK(c["adapter"]["gate_hidden"] == 512);
  CHECK(c["tune"]["lr"] == 3e-3);
  CHECK(c["tune"]["beta2"] == 0.99);
  CHECK(c["tune"]["batch"] == 32);
  CHECK(c["tune"]["micro_batch"] == 2);
  CHECK(c["eval"]["retrieval_candidates"] == 32);
  CHECK(c["bench"]["tokens"] == 84);
  CHECK(tune_config(c).accumulation() == 16);
  CHECK_NOTHROW(validate_config(c));
  CHECK_FALSE(config_help().empty());
}

TEST_CASE("overrides: dotted paths, unique leaves, type and key checks", "[train][config]") {
  auto c = default_config();
  apply_override(c, "adapter.experts=3");
  CHECK(c["adapter"]["experts"] == 3);
  apply_override(c, "gate_hidden=64");
  CHECK(c["adapter"]["gate_hidden"] == 64);
  CHECK_THROWS_AS(apply_override(c, "lr=0.1"), ConfigError);  // ambiguous leaf
  CHECK_THROWS_AS(apply_override(c, "adapter.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "adapter.experts=\"many\""), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "no_equals_sign"), ConfigError);
  apply_override(c, "tune.lr=5e-4");
  CHECK(c["tune"]["lr"] == 5e-4);
}

TEST_CASE("precedence: override > file > default", "[train][config]") {
  const auto path = std::filesystem::temp_directory_path() / "moelora_cfg_test.json";
  {
    std::ofstream out(path);
    out << R"({"adapter": {"experts": 4, "rank": 2}, "seed": 11})";
  }
  const auto c = resolve_config(path.string(), {"adapter.experts=6"});
  CHECK(c["adapter"]["experts"] == 6);
  CHECK(c["adapter"]["rank"] == 2);
  CHECK(c["seed"] == 11);
  CHECK(c["tune"]["lr"] == 3e-3);
  CHECK(config_fingerprint(c) != config_fingerprint(default_config()));
  CHECK(config_fingerprint(c) == config_fingerprint(resolve_config(path.string(), {"adapter.experts=6"})));
  {
    std::ofstream out(path);
    out << R"({"adapter": {"unknown": 1}})";
  }
  CHECK_THROWS_AS(resolve_config(path.string(), {}), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(resolve_config("/nonexistent/cfg.json", {}), ConfigError);
}

TEST_CASE("validation rejects inconsistent configs", "[train][config]") {
  auto c = default_config();
  apply_override(c, "tune.micro_batch=5");
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = default_config();
  apply_override(c, "adapter.experts=1");
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = default_config();
  apply_override(c, "pose_tokenizer.codebook_size=64");
  CHECK_THROWS_AS(validate_config(c), ConfigError);
}

TEST_CASE("MPJPE and PA-MPJPE", "[train][metrics]") {
  Mat<double> a = Mat<double>::Zero(2, 3), b = Mat<double>::Zero(2, 3);
  b(0, 0) = 3;
  b(0, 1) = 4;
  CHECK(mpjpe(a, b) == Approx(2.5));
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Mat<double> target = random_joints(rng);
    const Eigen::Matrix3d r = random_rotation(rng);
    const double s = 0.5 + rng.uniform();
    const Eigen::RowVector3d shift(rng.normal(), rng.normal(), rng.normal());
    const Mat<double> moved = ((target * r.transpose()) * s).rowwise() + shift;
    CHECK(*pa_mpjpe(moved, target) < 1e-9);
    const Mat<double> noisy = moved + rng.normal_matrix<double>(17, 3, 0.05);
    const auto pa = pa_mpjpe(noisy, target);
    REQUIRE(pa);
    CHECK(*pa <= mpjpe(noisy, target));
  }
  CHECK_FALSE(pa_mpjpe(random_joints(rng), Mat<double>::Zero(17, 3)));
  CHECK_THROWS(mpjpe(Mat<double>::Zero(3, 3), Mat<double>::Zero(4, 3)));
}

TEST_CASE("retrieval rank counts ties against the truth", "[train][metrics]") {
  const std::vector<double> d = {0.5, 0.2, 0.2, 0.9};
  CHECK(retrieval_rank(0.1, d) == 1);
  CHECK(retrieval_rank(0.2, d) == 3);
  CHECK(retrieval_rank(1.0, d) == 5);
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
}

TEST_CASE("retrieval: canonical motions score 1, unrelated motions score chance", "[train][metrics]") {
  const auto sk = SkeletonSpec::toy17();
  const SpecLibrary lib(sk);
  std::vector<std::optional<MotionSequence>> own;
  std::vector<MotionSpec> truth;
  for (const auto& s : lib.specs()) {
    own.push_back(lib.canonical(s));
    truth.push_back(s);
  }
  const auto top = retrieval_accuracy(own, truth, lib, 32, 3);
  CHECK(top[0] == 1.0);
  // motions independent of their captions: the truth is uniform within the candidate set
  Rng rng(4);
  std::vector<std::optional<MotionSequence>> unrelated;
  std::vector<MotionSpec> random_truth;
  for (int i = 0; i < 3200; ++i) {
    random_truth.push_back(lib.specs()[rng.below(90)]);
    unrelated.push_back(lib.canonical(lib.specs()[rng.below(90)]));
  }
  const auto chance = retrieval_accuracy(unrelated, random_truth, lib, 32, 5);
  CHECK(chance[0] == Approx(1.0 / 32).margin(0.012));
  std::vector<std::optional<MotionSequence>> missing(truth.size());
  CHECK(retrieval_accuracy(missing, truth, lib, 32, 3)[2] == 0.0);
}

TEST_CASE("diversity of identical pairs is zero", "[train][metrics]") {
  const auto sk = SkeletonSpec::toy17();
  const auto m = canonical_motion({Gait::walk, Speed::slow, Direction::forward, 16}, sk);
  const std::vector<MotionSequence> a = {m, m};
  CHECK(diversity(a, a) == 0.0);
  const auto other = canonical_motion({Gait::squat, Speed::fast, Direction::left, 16}, sk);
  const std::vector<MotionSequence> b = {other, other};
  CHECK(diversity(a, b) == Approx(std::sqrt(motion_distance(m, other))));
}

TEST_CASE("closed-form parameter count", "[train][scaling]") {
  const std::vector<LayerDims> layers = {{"a", 8, 8}, {"b", 8, 16}};
  CHECK(closed_form_param_count(layers, 3, 2, 10, 4) == 3 * 2 * (16 + 24) + 10 * 4 + 4 + 4 * 4 + 4);
}

TEST_CASE("mixing schedule honours the ratios exactly", "[train]") {
  TuneConfig c;
  const auto s = mixing_schedule(c);
  REQUIRE(s.size() == 32);
  CHECK(std::count(s.begin(), s.end(), TaskKind::t2m) == 12);
  CHECK(std::count(s.begin(), s.end(), TaskKind::pose) == 12);
  CHECK(std::count(s.begin(), s.end(), TaskKind::base) == 8);
  c.gate_ratio = 0;
  const auto lm_only = mixing_schedule(c);
  CHECK(std::count(lm_only.begin(), lm_only.end(), TaskKind::base) == 0);
}

TEST_CASE("gradient accumulation over micro-batches matches the full batch", "[train]") {
  auto a = tiny_setup();
  auto b = tiny_setup();
  instruction_tune(a.model, tiny_tune(2), a.data, 9, 0);
  instruction_tune(b.model, tiny_tune(32), b.data, 9, 0);
  const auto pa = a.model.trainable_parameters();
  const auto pb = b.model.trainable_parameters();
  REQUIRE(pa.size() == pb.size());
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    diff += (pa[i].value() - pb[i].value()).cast<double>().squaredNorm();
    norm += pb[i].value().cast<double>().squaredNorm();
  }
  CHECK(std::sqrt(diff / norm) < 1e-5);
}

TEST_CASE("tuning leaves the base untouched and logs held-out gating loss", "[train]") {
  auto s = tiny_setup();
  const auto hash = s.model.lm().base_hash();
  auto cfg = tiny_tune(2);
  cfg.steps = 30;
  const auto log = instruction_tune(s.model, cfg, s.data, 10, 5);
  CHECK(s.model.lm().base_hash() == hash);
  REQUIRE(log.size() == 30);
  CHECK(log.front().heldout_gat > 0);
  CHECK(log.back().heldout_gat < log.front().heldout_gat);
  CHECK(log.back().fm < log.front().fm);
}

TEST_CASE("a base weight change during tuning is detected", "[train]") {
  auto s = tiny_setup();
  auto base = s.model.lm().base_parameters();
  auto cfg = tiny_tune(2);
  cfg.steps = 1;
  CHECK_THROWS_AS(instruction_tune(s.model, cfg, s.data, 11, 0,
                                   [&](const TuneLogEntry&) { base.front().mutable_value()(0, 0) += 1.0f; }),
                  FrozenWeightError);
}

TEST_CASE("without the gating loss, eta = 1 prompts contribute nothing", "[train]") {
  auto s = tiny_setup();
  double fm = -1, gat = -1;
  const auto l = tune_sample_loss(s.model, s.data.gate.front(), false, &fm, &gat);
  CHECK_FALSE(l.requires_grad());
  CHECK(l.item() == 0.0);
  const auto with = tune_sample_loss(s.model, s.data.gate.front(), true, &fm, &gat);
  CHECK(with.item() == Approx(gat));
  CHECK(gat == Approx(-std::log(1.0 / 3)).epsilon(1e-5));
}

TEST_CASE("token id parsing rejects malformed generations", "[train]") {
  const auto v = extend_vocab(Vocabulary::base(), 5, 4);
  std::vector<Index> ok;
  for (Index s = 0; s < 2; ++s)
    for (Index p = 0; p < 5; ++p) ok.push_back(v.motion_id(p, (s + p) % 4));
  REQUIRE(motion_tokens_from_ids(ok, v));
  CHECK(motion_tokens_from_ids(ok, v)->at(7).slot == 1);
  auto shifted = ok;
  std::swap(shifted[0], shifted[1]);
  CHECK_FALSE(motion_tokens_from_ids(shifted, v));
  CHECK_FALSE(motion_tokens_from_ids({ok.begin(), ok.begin() + 7}, v));
  CHECK_FALSE(motion_tokens_from_ids({}, v));
  std::vector<Index> pose;
  for (Index p = 0; p < 5; ++p) pose.push_back(v.pose_id(p, 1));
  CHECK(pose_tokens_from_ids(pose, v));
  CHECK_FALSE(pose_tokens_from_ids(ok, v));
}

TEST_CASE("short pretraining lowers the loss deterministically", "[train]") {
  LmTrainConfig c;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.model_dim = 16;
  c.model.mlp_dim = 32;
  c.model.context = 32;
  c.steps = 40;
  c.batch = 8;
  const auto data = gen_base_lang_task(200, 1);
  std::vector<LmLogEntry> log_a, log_b;
  const auto a = pretrain_lm(c, data, 2, &log_a);
  const auto b = pretrain_lm(c, data, 2, &log_b);
  REQUIRE(log_a.size() == 40);
  CHECK(log_a.back().loss < log_a.front().loss);
  for (std::size_t i = 0; i < log_a.size(); ++i) CHECK(log_a[i].loss == log_b[i].loss);
  const auto probes = gen_base_lang_task(20, 1, Split::test);
  CHECK(base_task_accuracy(a, probes) == base_task_accuracy(b, probes));
}

TEST_CASE("tokenizer training is deterministic and reduces reconstruction error", "[train]") {
  const auto sk = SkeletonSpec::toy17();
  TokenizerTrainConfig c;
  c.model.model_dim = 16;
  c.model.heads = 2;
  c.model.layers = 1;
  c.model.mlp_dim = 32;
  c.model.code_dim = 8;
  c.model.codebook_size = 16;
  c.model.temporal_stages = 0;
  c.lr = 1e-3;
  c.steps = 30;
  c.batch = 16;
  c.window = 1;
  c.reset_every = 10;
  c.model.dead_window = 5;
  std::vector<InstructionSample> train, test;
  for (auto& p : gen_pose_samples(64, sk, 1)) train.push_back(p.sample);
  for (auto& p : gen_pose_samples(16, sk, 1, Split::val)) test.push_back(p.sample);
  const auto a = train_tokenizer(sk, c, pose_clips(train, sk), pose_clips(test, sk), 3);
  const auto b = train_tokenizer(sk, c, pose_clips(train, sk), pose_clips(test, sk), 3);
  REQUIRE(a.log.size() == 30);
  CHECK(a.log.back().rec < a.log.front().rec);
  CHECK(a.heldout_mse == b.heldout_mse);
  CHECK(a.heldout_mse == Approx(reconstruction_mse(a.tokenizer, pose_clips(test, sk))));
}

TEST_CASE("reports serialize metrics apart from timings", "[train]") {
  EvalReport r;
  r.name = "demo";
  r.metrics["a"] = 0.125;
  r.timing["seconds"] = 3.0;
  r.csv_header = {"x", "y"};
  r.csv_rows = {{"1", "2"}};
  const auto dir = std::filesystem::temp_directory_path() / "moelora_report_test";
  write_report(dir, r);
  CHECK(std::filesystem::exists(dir / "demo.json"));
  CHECK(r.csv() == "x,y\n1,2\n");
  CHECK(r.to_json()["metrics"]["a"] == 0.125);
  CHECK(format_metric(0.1) == "0.1");
  CHECK(format_metric(1.0 / 3) == "0.333333333");
  std::filesystem::remove_all(dir);
}
