// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moelora/taskgen/motion_gen.hpp"
#include "moelora/tokenizer/skeleton.hpp"

#include <optional>
#include <span>
#include <vector>

namespace moelora {

/// Mean Euclidean joint error between [J, 3] poses.
double mpjpe(const Mat<double>& predicted, const Mat<double>& target);

/// Similarity transform (rotation, uniform scale, translation) mapping
/// `predicted` onto `target` in the least-squares sense, as a 4x4 matrix.
Eigen::Matrix4d procrustes_alignment(const Mat<double>& predicted, const Mat<double>& target);

/// MPJPE after alignment. The admissible alignments are the closed-form
/// least-squares similarity transform and the identity; the lower error is
/// reported. Returns nullopt when the target joints all coincide.
std::optional<double> pa_mpjpe(const Mat<double>& predicted, const Mat<double>& target);

/// 1-based rank of `truth` among `truth` followed by `distractors`, with
/// ties counted against the truth.
Index retrieval_rank(double truth, std::span<const double> distractors);

/// Mean root-mean-square distance over paired motions a[i], b[i].
double diversity(std::span<const MotionSequence> a, std::span<const MotionSequence> b);

/// Median of a non-empty sample.
double median(std::vector<double> values);

}  // namespace moelora
