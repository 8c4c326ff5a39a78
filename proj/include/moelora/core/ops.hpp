// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations over Tensor<Scalar>. Trailing-axis operations
// (softmax, layer_norm, bias add) act on each row of the backing matrix.

#pragma once

#include "moelora/core/tensor.hpp"

#include <span>
#include <vector>

namespace moelora {

/// Row-major boolean attention mask; true marks an allowed (query, key) pair.
using AttentionMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// [..., k] x [k, p] -> [..., p]; leading dimensions of `a` act as a batch.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Elementwise product.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor);
/// a * s where s holds exactly one element; gradient flows to both.
template <typename Scalar>
Tensor<Scalar> mul_scalar(const Tensor<Scalar>& a, const Tensor<Scalar>& s);
/// [..., C] + [C]
template <typename Scalar>
Tensor<Scalar> add_bias(const Tensor<Scalar>& a, const Tensor<Scalar>& bias);

/// Flat element `index` of `a` as a scalar tensor.
template <typename Scalar>
Tensor<Scalar> element(const Tensor<Scalar>& a, Index index);
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a);
template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a);
/// Mean over rows: [R, C] -> [C].
template <typename Scalar>
Tensor<Scalar> mean_rows(const Tensor<Scalar>& a);
/// mean((a - b)^2)
template <typename Scalar>
Tensor<Scalar> mse(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a);
/// tanh approximation.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& a);
/// log(max(a, floor)); the gradient is zero where the floor is active.
template <typename Scalar>
Tensor<Scalar> log_clamped(const Tensor<Scalar>& a, Scalar floor);

/// Softmax over the trailing axis, max-shifted.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& a);
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias,
                          Scalar eps = Scalar(1e-5));

/// Row gather: out[i] = table[ids[i]]. Backward scatter-adds into table rows.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table, std::span<const Index> ids);
template <typename Scalar>
Tensor<Scalar> embedding_lookup(const Tensor<Scalar>& table, std::span<const Index> ids) {
  return gather_rows(table, ids);
}

/// Stacks row blocks; all inputs share the trailing dimension. Output is 2-D.
template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts);
template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Index begin, Index count);
template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts);
template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Index begin, Index count);
template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a);
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape);

/// Multi-head masked scaled dot-product attention over `groups` independent
/// blocks. q: [G*T, D], k and v: [G*S, D], mask: [T, S] shared by all groups.
/// Every query row must have at least one allowed key.
template <typename Scalar>
Tensor<Scalar> attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                         const AttentionMask& mask, Index heads, Index groups = 1);

/// Lower-triangular-plus-diagonal mask.
AttentionMask causal_mask(Index length);

struct Conv1dSpec {
  Index batch = 1;  // independent sequences stacked along rows
  Index kernel = 1;
  Index stride = 1;
  Index padding = 0;

  Index output_length(Index input_length) const { return (input_length + 2 * padding - kernel) / stride + 1; }
};

/// Temporal convolution. x: [B*F, Cin], weight: [kernel*Cin, Cout] with row
/// index (tap * Cin + channel), bias: [Cout] or undefined. Output [B*F', Cout].
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      const Conv1dSpec& spec);

/// Nearest-neighbour temporal upsampling of B stacked sequences.
template <typename Scalar>
Tensor<Scalar> upsample_nearest(const Tensor<Scalar>& x, Index batch, Index factor);

/// Mean of -log softmax(logits)[t, target_t] over positions with mask 1.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const Index> targets,
                             std::span<const Scalar> mask);

/// Forward value is `quantized`; the backward pass copies the incoming
/// gradient to `encoded` unchanged and gives `quantized` nothing.
template <typename Scalar>
Tensor<Scalar> straight_through(const Tensor<Scalar>& encoded, const Tensor<Scalar>& quantized);

}  // namespace moelora
