// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/train/pipeline.hpp"

namespace moelora {

std::uint64_t data_seed(const RunConfig& config, const std::string& role) {
  return Rng(config_seed(config)).derive("data/" + role).seed();
}

std::vector<InstructionSample> stage_samples(const RunConfig& config, const std::string& task, Index n, Split split,
                                             const std::string& role) {
  const SkeletonSpec skeleton = SkeletonSpec::toy17();
  return generate_dataset(task, n, data_seed(config, role.empty() ? task : role), split, skeleton).samples;
}

TokenizerRun stage_train_tokenizer(const RunConfig& config, const std::string& section,
                                   const std::function<void(const TokenizerLogEntry&)>& on_log) {
  const SkeletonSpec skeleton = SkeletonSpec::toy17();
  const TokenizerTrainConfig tc = tokenizer_config(config, section);
  const bool pose = section == "pose_tokenizer";
  const std::string task = pose ? "pose" : "t2m";
  const auto train = stage_samples(config, task, tc.train_samples, Split::train);
  const auto test = stage_samples(config, task, tc.test_samples, Split::val);
  const auto clips = [&](const std::vector<InstructionSample>& s) {
    return pose ? pose_clips(s, skeleton) : motion_clips(s, skeleton);
  };
  return train_tokenizer(skeleton, tc, clips(train), clips(test), Rng(config_seed(config)).derive(section).seed(),
                         on_log);
}

ToyLm<float> stage_pretrain(const RunConfig& config, std::vector<LmLogEntry>* log,
                            const std::function<void(const LmLogEntry&)>& on_log) {
  const LmTrainConfig lc = lm_config(config);
  const auto train = stage_samples(config, "base", lc.train_samples, Split::train);
  return pretrain_lm(lc, train, Rng(config_seed(config)).derive("pretrain").seed(), log, on_log);
}

MotionLm<float> stage_motion_lm(const RunConfig& config, const ToyLm<float>& pretrained) {
  const TuneConfig tc = tune_config(config);
  const Rng root = Rng(config_seed(config)).derive("motion_lm");
  ToyLm<float> lm = pretrained.clone();
  lm.extend(SkeletonSpec::toy17().parts(), config.at("tokenizer").at("codebook_size").get<Index>(),
            root.derive("extend").seed());
  return MotionLm<float>(std::move(lm), tc.model, root.derive("adapter").seed());
}

TuneData stage_tune_data(const RunConfig& config, const MotionLm<float>& model, const PartTokenizer<float>& motion,
                         const PartTokenizer<float>& pose) {
  const SkeletonSpec skeleton = SkeletonSpec::toy17();
  const TuneConfig tc = tune_config(config);
  const Vocabulary& vocab = model.lm().vocab();
  const Index m = tc.model.modality_tokens;
  TuneData data;
  auto t2m = stage_samples(config, "t2m", tc.t2m_samples, Split::train, "tune/t2m");
  attach_motion_tokens(t2m, motion, vocab, skeleton);
  data.t2m = make_items(t2m, vocab, m);
  auto poses = stage_samples(config, "pose", tc.pose_samples, Split::train, "tune/pose");
  attach_pose_tokens(poses, pose, vocab, skeleton);
  data.pose = make_items(poses, vocab, m);
  data.gate = make_items(stage_samples(config, "base", tc.gate_samples, Split::train, "tune/gate"), vocab, m);
  data.heldout_gate = make_items(stage_samples(config, "base", 100, Split::val, "tune/gate"), vocab, m);
  return data;
}

TuneRun stage_tune(const RunConfig& config, const ToyLm<float>& pretrained, const PartTokenizer<float>& motion,
                   const PartTokenizer<float>& pose, const std::function<void(const TuneLogEntry&)>& on_log) {
  TuneRun run{stage_motion_lm(config, pretrained), {}};
  const TuneData data = stage_tune_data(config, run.model, motion, pose);
  run.log = instruction_tune(run.model, tune_config(config), data, Rng(config_seed(config)).derive("tune").seed(), 10,
                             on_log);
  return run;
}

std::vector<InstructionSample> stage_probes(const RunConfig& config) {
  return stage_samples(config, "base", eval_config(config).probe_samples, Split::test, "eval/base");
}

std::vector<InstructionSample> stage_t2m_test(const RunConfig& config) {
  return stage_samples(config, "t2m", eval_config(config).t2m_samples, Split::test, "eval/t2m");
}

std::vector<InstructionSample> stage_pose_test(const RunConfig& config) {
  return stage_samples(config, "pose", eval_config(config).pose_samples, Split::test, "eval/pose");
}

}  // namespace moelora
