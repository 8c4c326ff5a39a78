// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic datasets. Every generator is a pure function of its
// arguments. Samples are assigned to train/val/test (80/10/10) by a salted
// content hash, so a split never shares content with another split.

#pragma once

#include "moelora/core/random.hpp"
#include "moelora/taskgen/instruction.hpp"
#include "moelora/tokenizer/skeleton.hpp"

#include <string>
#include <vector>

namespace moelora {

enum class Split { train, val, test };

const char* to_string(Split s);
Split parse_split(const std::string& s);

/// Split of a content key.
Split split_of(const std::string& content_key);

/// Letters used by the base tasks and the symbol-sequence length range.
inline constexpr char kBaseFirstLetter = 'a';
inline constexpr char kBaseLastLetter = 'j';
inline constexpr Index kBaseMinLength = 3;
inline constexpr Index kBaseMaxLength = 5;

/// Copy, reverse, sort and modular-add samples with exact answers, eta = 1.
std::vector<InstructionSample> gen_base_lang_task(Index n, std::uint64_t seed, Split split = Split::train);

struct MotionSample {
  MotionSpec spec;
  std::uint64_t motion_seed = 0;
  MotionSequence motion;
  std::vector<std::string> caption;
  InstructionSample sample;  // response ids attached after tokenization
};

/// Text-to-motion samples: jittered kinematic motion, templated caption, eta = 0.
std::vector<MotionSample> gen_motion_dataset(Index n, const SkeletonSpec& skeleton, std::uint64_t seed,
                                             Split split = Split::train);

/// Dimension of the synthetic pose feature.
inline constexpr Index kPoseFeatureDim = 64;
inline constexpr double kPoseFeatureNoise = 0.01;

/// Fixed projection [kPoseFeatureDim, J*3] shared by every pose dataset.
const Mat<double>& pose_projection(const SkeletonSpec& skeleton);
/// X_I = projection * flatten(pose) + N(0, noise^2).
std::vector<double> pose_feature(const Pose& pose, const SkeletonSpec& skeleton, Rng& rng,
                                 double noise = kPoseFeatureNoise);

/// Root-relative pose of one motion frame (joint 0 at the origin).
Pose pose_from_frame(const MotionSequence& motion, Index frame, Index joints);

struct PoseSample {
  Pose pose;
  InstructionSample sample;  // feature set, response ids attached after tokenization
};

/// Poses drawn from generated motions with their corrupted features, eta = 0.
std::vector<PoseSample> gen_pose_samples(Index n, const SkeletonSpec& skeleton, std::uint64_t seed,
                                         Split split = Split::train);

/// Rebuilds the motion or pose payload of a sample from its spec and seed.
MotionSequence regenerate_motion(const InstructionSample& sample, const SkeletonSpec& skeleton);
Pose regenerate_pose(const InstructionSample& sample, const SkeletonSpec& skeleton);

/// Gating supervision: alternates motion-unrelated base prompts (eta = 1) and
/// motion prompts (eta = 0, t2m and pose in turn), so classes stay balanced.
std::vector<InstructionSample> gen_gating_dataset(Index n, const SkeletonSpec& skeleton, std::uint64_t seed,
                                                  Split split = Split::train);

}  // namespace moelora
