// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moelora/adapter/expert_bank.hpp"

#include <span>

namespace moelora {

/// Two affine layers with a ReLU between them, softmax over n+1 expert
/// logits. The output layer starts at zero, so a fresh gate is uniform.
template <typename Scalar>
class GatingNetwork {
 public:
  GatingNetwork() = default;
  GatingNetwork(Index input_dim, Index hidden_dim, Index num_experts, std::uint64_t seed);

  Index input_dim() const { return w1_.dim(0); }
  Index hidden_dim() const { return w1_.dim(1); }
  Index num_experts() const { return w2_.dim(1); }

  Tensor<Scalar> logits(const Tensor<Scalar>& feature) const;
  ExpertMixture<Scalar> gate(const Tensor<Scalar>& feature) const;

  /// gating/{w1,b1,w2,b2}
  void visit(const std::function<void(const std::string&, Tensor<Scalar>&)>& fn);
  std::vector<Tensor<Scalar>> parameters() const { return {w1_, b1_, w2_, b2_}; }
  Index parameter_count() const;
  GatingNetwork clone() const;

 private:
  Tensor<Scalar> w1_, b1_, w2_, b2_;
};

/// Toy stand-in for a frozen text encoder: a fixed random embedding table
/// over text ids, mean-pooled over the instruction and prompt tokens.
template <typename Scalar>
class PromptEncoder {
 public:
  PromptEncoder() = default;
  PromptEncoder(Index vocab, Index dim, std::uint64_t seed);

  Index dim() const { return table_.dim(1); }
  /// [dim] feature; ids must be text ids and non-empty.
  Tensor<Scalar> encode(std::span<const Index> ids) const;

  void visit(const std::function<void(const std::string&, Tensor<Scalar>&)>& fn);

 private:
  Tensor<Scalar> table_;
};

/// Element count of the trainable expert matrices plus the gating network.
template <typename Scalar>
Index trainable_param_count(const ExpertBank<Scalar>& bank, const GatingNetwork<Scalar>& gating);

}  // namespace moelora
