// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/taskgen/datasets.hpp"

#include "moelora/core/random.hpp"

#include <cmath>
#include <stdexcept>

namespace moelora {

namespace {

constexpr const char* kSplitSalt = "moelora/split/v1/";
// Bounds the rejection loop that fills one split.
constexpr Index kMaxDrawsPerSample = 1000;

template <typename Make>
auto fill_split(Index n, Split split, const char* what, Make make) {
  if (n < 1) throw std::invalid_argument(std::string(what) + ": n must be positive");
  using Sample = decltype(make(Index(0)).first);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  const Index limit = n * kMaxDrawsPerSample;
  for (Index draw = 0; static_cast<Index>(out.size()) < n; ++draw) {
    if (draw >= limit) throw std::runtime_error(std::string(what) + ": split exhausted");
    auto [sample, key] = make(draw);
    if (split_of(key) == split) out.push_back(std::move(sample));
  }
  return out;
}

InstructionSample make_base(Rng rng) {
  InstructionSample s;
  s.task = TaskKind::base;
  s.eta = 1;
  const BaseOp op = kBaseOps[rng.below(4)];
  s.op = op;
  s.template_id = rng.below(kInstructionTemplates);
  s.instruction = base_instruction(op, s.template_id);
  if (op == BaseOp::add) {
    s.prompt = {std::to_string(rng.below(10)), "+", std::to_string(rng.below(10))};
  } else {
    const Index len = kBaseMinLength + rng.below(kBaseMaxLength - kBaseMinLength + 1);
    for (Index i = 0; i < len; ++i) {
      s.prompt.emplace_back(1, static_cast<char>(kBaseFirstLetter + rng.below(kBaseLastLetter - kBaseFirstLetter + 1)));
    }
  }
  s.response = base_answer(op, s.prompt);
  return s;
}

std::string base_key(const InstructionSample& s) {
  std::string key = std::string("base/") + to_string(*s.op) + "/" + std::to_string(s.template_id) + "/";
  for (const auto& w : s.prompt) key += w + " ";
  return key;
}

MotionSample make_motion(Rng rng, const SkeletonSpec& skeleton) {
  static const std::vector<MotionSpec> specs = all_motion_specs();
  MotionSample m;
  m.spec = specs[static_cast<std::size_t>(rng.below(static_cast<Index>(specs.size())))];
  m.motion_seed = rng.engine()();
  m.motion = generate_motion(m.spec, skeleton, m.motion_seed);
  const Index caption_template = rng.below(kCaptionTemplates);
  m.caption = caption_words(m.spec, caption_template);
  InstructionSample& s = m.sample;
  s.task = TaskKind::t2m;
  s.eta = 0;
  s.template_id = rng.below(kInstructionTemplates);
  s.instruction = t2m_instruction(s.template_id);
  s.prompt = m.caption;
  s.spec = m.spec;
  s.motion_seed = m.motion_seed;
  return m;
}

std::string motion_key(const std::string& prefix, const MotionSpec& spec, std::uint64_t seed) {
  return prefix + spec.key() + "/" + std::to_string(seed);
}

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  for (Split v : {Split::train, Split::val, Split::test})
    if (s == to_string(v)) return v;
  throw std::invalid_argument("unknown split '" + s + "'");
}

Split split_of(const std::string& content_key) {
  const std::uint64_t bucket = mix64(fnv1a(std::string(kSplitSalt) + content_key)) % 10;
  if (bucket < 8) return Split::train;
  return bucket == 8 ? Split::val : Split::test;
}

std::vector<InstructionSample> gen_base_lang_task(Index n, std::uint64_t seed, Split split) {
  const Rng root = Rng(seed).derive("base");
  return fill_split(n, split, "gen_base_lang_task", [&](Index draw) {
    InstructionSample s = make_base(root.derive(static_cast<std::uint64_t>(draw)));
    std::string key = base_key(s);
    return std::pair{std::move(s), std::move(key)};
  });
}

std::vector<MotionSample> gen_motion_dataset(Index n, const SkeletonSpec& skeleton, std::uint64_t seed, Split split) {
  if (skeleton.parts() != 5) throw std::invalid_argument("gen_motion_dataset: skeleton must have 5 parts");
  const Rng root = Rng(seed).derive("t2m");
  return fill_split(n, split, "gen_motion_dataset", [&](Index draw) {
    // The split is decided from the spec and seed before the motion is built.
    Rng rng = root.derive(static_cast<std::uint64_t>(draw));
    Rng peek = rng;
    static const std::vector<MotionSpec> specs = all_motion_specs();
    const MotionSpec spec = specs[static_cast<std::size_t>(peek.below(static_cast<Index>(specs.size())))];
    const std::uint64_t motion_seed = peek.engine()();
    std::string key = motion_key("t2m/", spec, motion_seed);
    if (split_of(key) != split) return std::pair{MotionSample{}, std::move(key)};
    return std::pair{make_motion(rng, skeleton), std::move(key)};
  });
}

const Mat<double>& pose_projection(const SkeletonSpec& skeleton) {
  static const Mat<double> projection = [&] {
    Rng rng = Rng(0x706f7365ULL).derive("pose/projection");
    return rng.normal_matrix<double>(kPoseFeatureDim, 17 * 3, 1.0 / std::sqrt(17.0 * 3.0));
  }();
  if (projection.cols() != skeleton.joints * skeleton.channels) {
    throw std::invalid_argument("pose_projection: defined for the 17-joint skeleton");
  }
  return projection;
}

std::vector<double> pose_feature(const Pose& pose, const SkeletonSpec& skeleton, Rng& rng, double noise) {
  const Mat<double>& p = pose_projection(skeleton);
  const Eigen::Map<const Eigen::VectorXd> flat(pose.values.data(), pose.values.size());
  Eigen::VectorXd f = p * flat;
  if (noise > 0) {
    for (Index i = 0; i < f.size(); ++i) f(i) += rng.normal(0.0, noise);
  }
  return {f.data(), f.data() + f.size()};
}

Pose pose_from_frame(const MotionSequence& motion, Index frame, Index joints) {
  if (frame < 0 || frame >= motion.length()) throw std::out_of_range("pose_from_frame: frame out of range");
  Pose p;
  p.values = Eigen::Map<const Mat<double>>(motion.frames.row(frame).data(), joints, 3);
  p.values.row(0).setZero();
  return p;
}

MotionSequence regenerate_motion(const InstructionSample& sample, const SkeletonSpec& skeleton) {
  if (!sample.spec) throw std::invalid_argument("regenerate_motion: sample has no motion spec");
  return generate_motion(*sample.spec, skeleton, sample.motion_seed);
}

Pose regenerate_pose(const InstructionSample& sample, const SkeletonSpec& skeleton) {
  return pose_from_frame(regenerate_motion(sample, skeleton), sample.frame, skeleton.joints);
}

std::vector<PoseSample> gen_pose_samples(Index n, const SkeletonSpec& skeleton, std::uint64_t seed, Split split) {
  const Rng root = Rng(seed).derive("pose");
  static const std::vector<MotionSpec> specs = all_motion_specs();
  return fill_split(n, split, "gen_pose_samples", [&](Index draw) {
    Rng rng = root.derive(static_cast<std::uint64_t>(draw));
    PoseSample p;
    InstructionSample& s = p.sample;
    s.task = TaskKind::pose;
    s.eta = 0;
    s.spec = specs[static_cast<std::size_t>(rng.below(static_cast<Index>(specs.size())))];
    s.motion_seed = rng.engine()();
    s.frame = rng.below(s.spec->frames);
    std::string key = motion_key("pose/", *s.spec, s.motion_seed) + "/" + std::to_string(s.frame);
    if (split_of(key) != split) return std::pair{std::move(p), std::move(key)};
    s.template_id = rng.below(kInstructionTemplates);
    s.instruction = pose_instruction(s.template_id);
    p.pose = regenerate_pose(s, skeleton);
    Rng noise = rng.derive("noise");
    s.feature = pose_feature(p.pose, skeleton, noise);
    return std::pair{std::move(p), std::move(key)};
  });
}

std::vector<InstructionSample> gen_gating_dataset(Index n, const SkeletonSpec& skeleton, std::uint64_t seed,
                                                  Split split) {
  if (n < 1) throw std::invalid_argument("gen_gating_dataset: n must be positive");
  const Rng root = Rng(seed).derive("gating");
  const Index unrelated = (n + 1) / 2;
  const Index related = n - unrelated;
  auto base = gen_base_lang_task(unrelated, root.derive("base").seed(), split);
  std::vector<MotionSample> motion;
  std::vector<PoseSample> pose;
  if (related > 0) motion = gen_motion_dataset((related + 1) / 2, skeleton, root.derive("t2m").seed(), split);
  if (related > 1) pose = gen_pose_samples(related / 2, skeleton, root.derive("pose").seed(), split);
  std::vector<InstructionSample> out;
  out.reserve(static_cast<std::size_t>(n));
  std::size_t b = 0, m = 0, p = 0;
  for (Index i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      out.push_back(base[b++]);
    } else if ((i / 2) % 2 == 0 && m < motion.size()) {
      out.push_back(motion[m++].sample);
    } else if (p < pose.size()) {
      out.push_back(pose[p++].sample);
    } else {
      out.push_back(motion[m++].sample);
    }
  }
  return out;
}

}  // namespace moelora
