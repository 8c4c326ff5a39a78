// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/tokenizer/skeleton.hpp"

#include <stdexcept>

namespace moelora {

std::vector<Index> SkeletonSpec::joints_of(Index part) const {
  std::vector<Index> out;
  for (Index j = 0; j < joints; ++j)
    if (part_of[static_cast<std::size_t>(j)] == part) out.push_back(j);
  return out;
}

void SkeletonSpec::validate() const {
  if (joints < 1 || channels < 1) throw std::invalid_argument("skeleton: empty joint or channel set");
  if (static_cast<Index>(part_of.size()) != joints) throw std::invalid_argument("skeleton: unassigned joint");
  if (parts() < 1) throw std::invalid_argument("skeleton: no parts");
  std::vector<bool> seen(part_names.size(), false);
  for (Index j = 0; j < joints; ++j) {
    const Index p = part_of[static_cast<std::size_t>(j)];
    if (p < 0 || p >= parts()) throw std::invalid_argument("skeleton: joint " + std::to_string(j) + " is unassigned");
    seen[static_cast<std::size_t>(p)] = true;
  }
  for (std::size_t p = 0; p < seen.size(); ++p)
    if (!seen[p]) throw std::invalid_argument("skeleton: part '" + part_names[p] + "' has no joints");
}

double SkeletonSpec::mean_bone_length() const {
  double total = 0.0;
  int bones = 0;
  for (Index j = 0; j < joints; ++j) {
    const Index p = parent[static_cast<std::size_t>(j)];
    if (p < 0) continue;
    total += (rest.row(j) - rest.row(p)).norm();
    ++bones;
  }
  return bones ? total / bones : 0.0;
}

double SkeletonSpec::height() const { return rest.col(1).maxCoeff() - rest.col(1).minCoeff(); }

SkeletonSpec SkeletonSpec::whole_body() const {
  SkeletonSpec out = *this;
  out.part_of.assign(static_cast<std::size_t>(joints), 0);
  out.part_names = {"body"};
  return out;
}

SkeletonSpec SkeletonSpec::toy17() {
  SkeletonSpec s;
  s.joints = 17;
  s.channels = 3;
  s.part_names = {"torso", "left_arm", "right_arm", "left_leg", "right_leg"};
  s.part_of = {0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4};
  s.parent = {-1, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15};
  s.rest.resize(17, 3);
  // x to the subject's left, y up, z forward
  s.rest << 0.00, 1.00, 0.0,   // pelvis
      0.00, 1.20, 0.0,         // spine
      0.00, 1.40, 0.0,         // chest
      0.00, 1.55, 0.0,         // neck
      0.00, 1.72, 0.0,         // head
      0.18, 1.48, 0.0,         // left shoulder
      0.18, 1.20, 0.0,         // left elbow
      0.18, 0.95, 0.0,         // left wrist
      -0.18, 1.48, 0.0,        // right shoulder
      -0.18, 1.20, 0.0,        // right elbow
      -0.18, 0.95, 0.0,        // right wrist
      0.10, 0.95, 0.0,         // left hip
      0.10, 0.52, 0.0,         // left knee
      0.10, 0.10, 0.0,         // left ankle
      -0.10, 0.95, 0.0,        // right hip
      -0.10, 0.52, 0.0,        // right knee
      -0.10, 0.10, 0.0;        // right ankle
  return s;
}

AttentionMask build_part_mask(const SkeletonSpec& skeleton) {
  skeleton.validate();
  const Index j = skeleton.joints;
  const Index n = skeleton.parts();
  AttentionMask mask = AttentionMask::Constant(j + n, j + n, false);
  for (Index a = 0; a < j; ++a) {
    const Index pa = skeleton.part_of[static_cast<std::size_t>(a)];
    for (Index b = 0; b < j; ++b) mask(a, b) = skeleton.part_of[static_cast<std::size_t>(b)] == pa;
    mask(a, j + pa) = true;
    mask(j + pa, a) = true;
  }
  for (Index p = 0; p < n; ++p) mask(j + p, j + p) = true;
  return mask;
}

}  // namespace moelora
