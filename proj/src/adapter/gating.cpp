// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/adapter/gating.hpp"

#include <cmath>

namespace moelora {

template <typename Scalar>
GatingNetwork<Scalar>::GatingNetwork(Index input_dim, Index hidden_dim, Index num_experts, std::uint64_t seed) {
  if (num_experts < 1 || input_dim < 1 || hidden_dim < 1) throw std::invalid_argument("GatingNetwork: bad dims");
  Rng rng = Rng(seed).derive("gating");
  w1_ = Tensor<Scalar>(Shape{input_dim, hidden_dim},
                       rng.normal_matrix<Scalar>(input_dim, hidden_dim, 1.0 / std::sqrt(double(input_dim))), true);
  b1_ = Tensor<Scalar>(Shape{hidden_dim}, true);
  w2_ = Tensor<Scalar>(Shape{hidden_dim, num_experts}, true);
  b2_ = Tensor<Scalar>(Shape{num_experts}, true);
}

template <typename Scalar>
Tensor<Scalar> GatingNetwork<Scalar>::logits(const Tensor<Scalar>& feature) const {
  if (feature.numel() != input_dim())
    throw ShapeError("gate: feature has " + std::to_string(feature.numel()) + " values, expected " +
                     std::to_string(input_dim()));
  const Tensor<Scalar> row = feature.rank() == 1 ? feature : reshape(feature, Shape{input_dim()});
  const auto hidden = relu(add_bias(matmul(row, w1_), b1_));
  return add_bias(matmul(hidden, w2_), b2_);
}

template <typename Scalar>
ExpertMixture<Scalar> GatingNetwork<Scalar>::gate(const Tensor<Scalar>& feature) const {
  return {softmax(logits(feature))};
}

template <typename Scalar>
void GatingNetwork<Scalar>::visit(const std::function<void(const std::string&, Tensor<Scalar>&)>& fn) {
  fn("gating/w1", w1_);
  fn("gating/b1", b1_);
  fn("gating/w2", w2_);
  fn("gating/b2", b2_);
}

template <typename Scalar>
Index GatingNetwork<Scalar>::parameter_count() const {
  return w1_.numel() + b1_.numel() + w2_.numel() + b2_.numel();
}

template <typename Scalar>
GatingNetwork<Scalar> GatingNetwork<Scalar>::clone() const {
  GatingNetwork out;
  out.w1_ = w1_.clone();
  out.b1_ = b1_.clone();
  out.w2_ = w2_.clone();
  out.b2_ = b2_.clone();
  return out;
}

template <typename Scalar>
PromptEncoder<Scalar>::PromptEncoder(Index vocab, Index dim, std::uint64_t seed) {
  Rng rng = Rng(seed).derive("prompt-encoder");
  table_ = Tensor<Scalar>(Shape{vocab, dim}, rng.normal_matrix<Scalar>(vocab, dim, 1.0));
}

template <typename Scalar>
Tensor<Scalar> PromptEncoder<Scalar>::encode(std::span<const Index> ids) const {
  if (ids.empty()) throw std::invalid_argument("PromptEncoder: empty instruction and prompt");
  NoGradGuard frozen;
  return mean_rows(gather_rows(table_, ids));
}

template <typename Scalar>
void PromptEncoder<Scalar>::visit(const std::function<void(const std::string&, Tensor<Scalar>&)>& fn) {
  fn("prompt_encoder/table", table_);
}

template <typename Scalar>
Index trainable_param_count(const ExpertBank<Scalar>& bank, const GatingNetwork<Scalar>& gating) {
  return bank.adapter_parameter_count() + gating.parameter_count();
}

template class GatingNetwork<float>;
template class GatingNetwork<double>;
template class PromptEncoder<float>;
template class PromptEncoder<double>;
template Index trainable_param_count<float>(const ExpertBank<float>&, const GatingNetwork<float>&);
template Index trainable_param_count<double>(const ExpertBank<double>&, const GatingNetwork<double>&);

}  // namespace moelora
