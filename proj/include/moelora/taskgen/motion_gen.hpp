// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parametric kinematic motions for the toy skeleton. Limbs follow phase-offset
// sinusoidal joint angles; speed sets frequency and amplitude, direction sets
// the facing yaw, and walk/run/circle translate the root. Time runs from zero
// at 20 fps for every duration, so a short motion is a prefix of a longer one.

#pragma once

#include "moelora/tokenizer/skeleton.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace moelora {

enum class Gait { walk, run, wave, squat, circle };
enum class Speed { slow, fast };
enum class Direction { forward, left, right };

inline constexpr std::array<Gait, 5> kGaits = {Gait::walk, Gait::run, Gait::wave, Gait::squat, Gait::circle};
inline constexpr std::array<Speed, 2> kSpeeds = {Speed::slow, Speed::fast};
inline constexpr std::array<Direction, 3> kDirections = {Direction::forward, Direction::left, Direction::right};
inline constexpr std::array<Index, 3> kDurations = {16, 32, 64};
inline constexpr double kMotionFps = 20.0;

const char* to_string(Gait g);
const char* to_string(Speed s);
const char* to_string(Direction d);
Gait parse_gait(const std::string& s);
Speed parse_speed(const std::string& s);
Direction parse_direction(const std::string& s);

struct MotionSpec {
  Gait gait = Gait::walk;
  Speed speed = Speed::slow;
  Direction direction = Direction::forward;
  Index frames = 16;

  bool operator==(const MotionSpec&) const = default;
  std::string key() const;
};

/// All 90 (gait, speed, direction, duration) combinations in a fixed order.
std::vector<MotionSpec> all_motion_specs();

/// Seeded motion; without jitter the result is the canonical motion of the spec.
MotionSequence generate_motion(const MotionSpec& spec, const SkeletonSpec& skeleton, std::uint64_t seed,
                               bool jitter = true);
MotionSequence canonical_motion(const MotionSpec& spec, const SkeletonSpec& skeleton);

/// Linear-interpolation resampling over normalized time.
MotionSequence resample(const MotionSequence& motion, Index frames);
/// Mean squared difference after resampling `b` to the length of `a`.
double motion_distance(const MotionSequence& a, const MotionSequence& b);

/// Canonical motions cached per skeleton for recovery and retrieval scoring.
class SpecLibrary {
 public:
  explicit SpecLibrary(const SkeletonSpec& skeleton);

  const std::vector<MotionSpec>& specs() const { return specs_; }
  const MotionSequence& canonical(const MotionSpec& spec) const;
  /// Nearest canonical motion among specs with the same frame count.
  MotionSpec recover(const MotionSequence& motion) const;
  /// Distance between a motion and the canonical motion of `spec`.
  double score(const MotionSequence& motion, const MotionSpec& spec) const;

 private:
  std::vector<MotionSpec> specs_;
  std::vector<MotionSequence> motions_;
};

/// Separation threshold between canonical motions of distinct specs, pinned
/// just below the minimum pairwise distance of the generator.
inline constexpr double kSpecSeparation = 1.5e-3;

/// Caption template count and realization.
inline constexpr Index kCaptionTemplates = 3;
std::vector<std::string> caption_words(const MotionSpec& spec, Index template_id);
/// Inverse of caption_words for any template.
std::optional<MotionSpec> parse_caption(const std::vector<std::string>& words);

}  // namespace moelora
