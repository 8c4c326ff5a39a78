// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small parameter blocks shared by the tokenizer and the language model.

#pragma once

#include "moelora/core/ops.hpp"
#include "moelora/core/random.hpp"

#include <functional>
#include <string>

namespace moelora {

template <typename Scalar>
using ParamVisitor = std::function<void(const std::string&, Tensor<Scalar>&)>;

template <typename Scalar>
struct Linear {
  Tensor<Scalar> weight;  // [in, out]
  Tensor<Scalar> bias;    // [out] or undefined

  /// weight ~ N(0, gain^2 / in), zero bias.
  static Linear init(Index in, Index out, Rng& rng, bool with_bias = true, double gain = 1.0);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& fn);
};

template <typename Scalar>
struct LayerNorm {
  Tensor<Scalar> gain;
  Tensor<Scalar> bias;

  static LayerNorm init(Index dim);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& fn);
};

/// Temporal convolution over `batch` stacked sequences.
template <typename Scalar>
struct Conv1d {
  Tensor<Scalar> weight;  // [kernel * in, out]
  Tensor<Scalar> bias;    // [out]
  Index kernel = 1;
  Index stride = 1;
  Index padding = 0;

  static Conv1d init(Index in, Index out, Index kernel, Index stride, Index padding, Rng& rng, double gain = 1.0);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Index batch) const;
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& fn);
};

/// Pre-norm transformer block with masked multi-head attention and a GELU MLP.
template <typename Scalar>
struct TransformerBlock {
  LayerNorm<Scalar> ln1, ln2;
  Linear<Scalar> q, k, v, o, up, down;

  static TransformerBlock init(Index dim, Index mlp_dim, Rng& rng);
  /// x: [groups * T, dim]; mask [T, T] shared by every group.
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, const AttentionMask& mask, Index heads, Index groups) const;
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& fn);
};

/// Collects every tensor reachable through `visit` in visiting order.
template <typename Scalar, typename Module>
std::vector<Tensor<Scalar>> collect_parameters(Module& module) {
  std::vector<Tensor<Scalar>> out;
  module.visit([&](const std::string&, Tensor<Scalar>& t) { out.push_back(t); });
  return out;
}

}  // namespace moelora
