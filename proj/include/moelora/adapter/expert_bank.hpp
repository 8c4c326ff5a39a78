// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mixture-of-experts LoRA: per-layer banks of low-rank pairs (A_i, B_i),
// where expert 0 is a frozen all-zero pair, combined with gate weights
// alpha as W' = W + sum_i alpha_i A_i B_i.

#pragma once

#include "moelora/core/ops.hpp"
#include "moelora/core/random.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace moelora {

template <typename Scalar>
struct LoraExpert {
  Tensor<Scalar> a;  // [d_in, r]
  Tensor<Scalar> b;  // [r, d_out]
  bool trainable = true;
};

struct LayerDims {
  std::string name;
  Index d_in = 0;
  Index d_out = 0;
};

/// Probability vector over the n+1 experts of a bank.
template <typename Scalar>
struct ExpertMixture {
  Tensor<Scalar> alpha;  // [n+1]

  Index size() const { return alpha.numel(); }
  Scalar weight(Index i) const { return alpha.value().data()[i]; }

  /// e_i over `experts` entries.
  static ExpertMixture one_hot(Index experts, Index i);
  /// Validates non-negativity and unit sum (1e-6).
  static ExpertMixture from_values(const std::vector<Scalar>& values);
};

/// Throws std::invalid_argument unless alpha is a probability vector.
template <typename Scalar>
void validate_mixture(const ExpertMixture<Scalar>& mixture, double tolerance = 1e-6);

template <typename Scalar>
class ExpertBank {
 public:
  struct Layer {
    LayerDims dims;
    std::vector<LoraExpert<Scalar>> experts;
  };

  ExpertBank() = default;
  ExpertBank(Index rank, Index num_experts) : rank_(rank), num_experts_(num_experts) {}

  Index rank() const { return rank_; }
  /// Total experts including the zero expert (n + 1).
  Index num_experts() const { return num_experts_; }
  Index trainable_experts() const { return num_experts_ - 1; }

  bool has_layer(const std::string& name) const { return layers_.count(name) != 0; }
  const Layer& layer(const std::string& name) const;
  Layer& layer(const std::string& name);
  std::vector<std::string> layer_names() const;
  void add_layer(Layer layer);

  /// Visits every A/B tensor under its checkpoint name bank/<layer>/expert<i>/{A,B}.
  void visit(const std::function<void(const std::string&, Tensor<Scalar>&)>& fn);
  std::vector<Tensor<Scalar>> trainable_parameters() const;
  /// Element count of all trainable A and B matrices.
  Index adapter_parameter_count() const;
  ExpertBank clone() const;

 private:
  Index rank_ = 0;
  Index num_experts_ = 0;
  std::map<std::string, Layer> layers_;
};

/// Expert 0 is all-zero and frozen; trainable experts get A ~ N(0, 1/r)
/// (variance) and B = 0. Rejects rank < 1, num_experts < 2 and
/// rank >= min(d_in, d_out).
template <typename Scalar>
ExpertBank<Scalar> init_bank(const std::vector<LayerDims>& layers, Index rank, Index num_experts, std::uint64_t seed);

/// W + sum_i alpha_i A_i B_i, materialized. Terms with alpha_i == 0 and the
/// zero expert are skipped; both contribute exact zeros.
template <typename Scalar>
Tensor<Scalar> mix_weights(const Tensor<Scalar>& weight, std::span<const LoraExpert<Scalar>> experts,
                           const ExpertMixture<Scalar>& mixture);

/// x W + sum_i alpha_i (x A_i) B_i without materializing the update.
template <typename Scalar>
Tensor<Scalar> moe_linear_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                  std::span<const LoraExpert<Scalar>> experts, const ExpertMixture<Scalar>& mixture);

template <typename Scalar>
struct GatingLoss {
  Tensor<Scalar> value;
  bool clamped = false;  // alpha_0 fell below the 1e-12 floor
};

/// -eta * log(max(alpha_0, 1e-12)).
template <typename Scalar>
GatingLoss<Scalar> gating_loss(const ExpertMixture<Scalar>& mixture, int eta);

inline constexpr double kGatingLogFloor = 1e-12;

}  // namespace moelora
