// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moelora/core/ops.hpp"

#include <string>
#include <vector>

namespace moelora {

/// Joint layout and its partition into body parts.
struct SkeletonSpec {
  Index joints = 0;
  Index channels = 3;
  std::vector<Index> part_of;  // joint -> part id
  std::vector<std::string> part_names;
  std::vector<Index> parent;  // kinematic parent, -1 for the root
  Mat<double> rest;           // [joints, 3] rest positions in meters, y up

  Index parts() const { return static_cast<Index>(part_names.size()); }
  std::vector<Index> joints_of(Index part) const;
  /// Throws std::invalid_argument on an unassigned or out-of-range joint.
  void validate() const;
  /// Mean length of the kinematic bones of the rest pose.
  double mean_bone_length() const;
  /// Vertical extent of the rest pose; positions are divided by it before encoding.
  double height() const;

  /// Same joints, one part holding all of them.
  SkeletonSpec whole_body() const;

  /// 17 joints: torso+head (5), left arm, right arm, left leg, right leg (3 each).
  static SkeletonSpec toy17();
};

/// Single-frame joint positions [J, C], root-relative.
struct Pose {
  Mat<double> values;
};

/// Frames [F, J*C]. Joint 0 carries the root velocity (m/s); every other
/// joint is a root-relative position in meters.
struct MotionSequence {
  Mat<double> frames;
  double fps = 20.0;

  Index length() const { return frames.rows(); }
};

/// Part-token attention mask for the spatial transformer: rows/cols are the
/// J joints followed by the N part tokens. A part token sees its own joints
/// and itself; a joint sees the joints and token of its own part.
AttentionMask build_part_mask(const SkeletonSpec& skeleton);

}  // namespace moelora
