// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/train/metrics.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moelora {

namespace {

void check_pair(const Mat<double>& a, const Mat<double>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != 3 || b.cols() != 3 || a.rows() == 0) {
    throw ShapeError(std::string(what) + ": expected two [J, 3] poses of equal size");
  }
}

}  // namespace

double mpjpe(const Mat<double>& predicted, const Mat<double>& target) {
  check_pair(predicted, target, "mpjpe");
  return (predicted - target).rowwise().norm().mean();
}

Eigen::Matrix4d procrustes_alignment(const Mat<double>& predicted, const Mat<double>& target) {
  check_pair(predicted, target, "procrustes_alignment");
  const Eigen::Matrix3Xd src = predicted.transpose();
  const Eigen::Matrix3Xd dst = target.transpose();
  return Eigen::umeyama(src, dst, true);
}

std::optional<double> pa_mpjpe(const Mat<double>& predicted, const Mat<double>& target) {
  check_pair(predicted, target, "pa_mpjpe");
  const Eigen::RowVector3d centroid = target.colwise().mean();
  if ((target.rowwise() - centroid).squaredNorm() <= 1e-18) return std::nullopt;
  const double identity = mpjpe(predicted, target);
  const Eigen::Matrix4d t = procrustes_alignment(predicted, target);
  if (!t.allFinite()) return identity;
  Mat<double> aligned = (predicted * t.topLeftCorner<3, 3>().transpose()).rowwise() +
                        t.topRightCorner<3, 1>().transpose();
  return std::min(identity, mpjpe(aligned, target));
}

Index retrieval_rank(double truth, std::span<const double> distractors) {
  Index rank = 1;
  for (double d : distractors) {
    if (!(d > truth)) ++rank;
  }
  return rank;
}

double diversity(std::span<const MotionSequence> a, std::span<const MotionSequence> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("diversity: need equal non-empty subsets");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::sqrt(motion_distance(a[i], b[i]));
  return total / static_cast<double>(a.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace moelora
