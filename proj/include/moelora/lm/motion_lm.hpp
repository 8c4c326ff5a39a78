// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// The tuned model: a ToyLm with an expert bank, the gating network and its
// frozen prompt encoder, and the pose-feature projector.

#pragma once

#include "moelora/adapter/gating.hpp"
#include "moelora/lm/toy_lm.hpp"

namespace moelora {

struct MotionLmConfig {
  Index experts = 5;  // including the zero expert
  Index rank = 8;
  Index gate_dim = 512;
  Index gate_hidden = 512;
  Index feature_dim = 64;
  Index modality_tokens = 1;
};

template <typename Scalar>
class MotionLm {
 public:
  MotionLm() = default;
  /// Attaches a fresh bank to `base` (which must already be extended).
  MotionLm(ToyLm<Scalar> base, MotionLmConfig config, std::uint64_t seed);

  ToyLm<Scalar>& lm() { return lm_; }
  const ToyLm<Scalar>& lm() const { return lm_; }
  GatingNetwork<Scalar>& gating() { return gating_; }
  const GatingNetwork<Scalar>& gating() const { return gating_; }
  const MotionLmConfig& config() const { return config_; }

  /// Gate feature for instruction+prompt text ids.
  Tensor<Scalar> gate_feature(std::span<const Index> text_ids) const;
  ExpertMixture<Scalar> route(std::span<const Index> text_ids) const;
  /// [modality_tokens, d] embeddings from a pose feature [feature_dim].
  Tensor<Scalar> project_modality(const Tensor<Scalar>& feature) const;

  /// Experts, gating, projector and the vocabulary extension rows.
  std::vector<Tensor<Scalar>> trainable_parameters();
  Index trainable_parameter_count();

  void visit(const ParamVisitor<Scalar>& fn);
  void save(Checkpoint& ckpt);
  static MotionLm from_checkpoint(const Checkpoint& ckpt);

 private:
  ToyLm<Scalar> lm_;
  MotionLmConfig config_;
  GatingNetwork<Scalar> gating_;
  PromptEncoder<Scalar> prompt_encoder_;
  Linear<Scalar> projector_;
};

}  // namespace moelora
