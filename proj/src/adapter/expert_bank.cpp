// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/adapter/expert_bank.hpp"

#include <cmath>
#include <stdexcept>

namespace moelora {

template <typename Scalar>
ExpertMixture<Scalar> ExpertMixture<Scalar>::one_hot(Index experts, Index i) {
  if (i < 0 || i >= experts) throw std::invalid_argument("one_hot: index out of range");
  Tensor<Scalar> alpha(Shape{experts});
  alpha.mutable_value()(0, i) = Scalar(1);
  return {alpha};
}

template <typename Scalar>
ExpertMixture<Scalar> ExpertMixture<Scalar>::from_values(const std::vector<Scalar>& values) {
  ExpertMixture m{Tensor<Scalar>::from_values(Shape{static_cast<Index>(values.size())}, values)};
  validate_mixture(m);
  return m;
}

template <typename Scalar>
void validate_mixture(const ExpertMixture<Scalar>& mixture, double tolerance) {
  const auto& a = mixture.alpha.value();
  if (a.size() < 1) throw std::invalid_argument("expert mixture is empty");
  if ((a.array() < Scalar(0)).any()) throw std::invalid_argument("expert mixture has a negative weight");
  if (std::abs(static_cast<double>(a.sum()) - 1.0) > tolerance)
    throw std::invalid_argument("expert mixture does not sum to one");
}

template <typename Scalar>
const typename ExpertBank<Scalar>::Layer& ExpertBank<Scalar>::layer(const std::string& name) const {
  auto it = layers_.find(name);
  if (it == layers_.end()) throw std::out_of_range("expert bank has no layer '" + name + "'");
  return it->second;
}

template <typename Scalar>
typename ExpertBank<Scalar>::Layer& ExpertBank<Scalar>::layer(const std::string& name) {
  auto it = layers_.find(name);
  if (it == layers_.end()) throw std::out_of_range("expert bank has no layer '" + name + "'");
  return it->second;
}

template <typename Scalar>
std::vector<std::string> ExpertBank<Scalar>::layer_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : layers_) out.push_back(k);
  return out;
}

template <typename Scalar>
void ExpertBank<Scalar>::add_layer(Layer layer) {
  if (static_cast<Index>(layer.experts.size()) != num_experts_)
    throw std::invalid_argument("layer '" + layer.dims.name + "' has the wrong expert count");
  for (const auto& e : layer.experts) {
    if (e.a.shape() != Shape{layer.dims.d_in, rank_} || e.b.shape() != Shape{rank_, layer.dims.d_out})
      throw ShapeError("layer '" + layer.dims.name + "': expert shapes disagree with rank/dims");
  }
  if (layer.experts.front().trainable) throw std::invalid_argument("expert 0 must be the frozen zero expert");
  const std::string name = layer.dims.name;
  layers_[name] = std::move(layer);
}

template <typename Scalar>
void ExpertBank<Scalar>::visit(const std::function<void(const std::string&, Tensor<Scalar>&)>& fn) {
  for (auto& [name, layer] : layers_) {
    for (std::size_t i = 0; i < layer.experts.size(); ++i) {
      const std::string prefix = "bank/" + name + "/expert" + std::to_string(i) + "/";
      fn(prefix + "A", layer.experts[i].a);
      fn(prefix + "B", layer.experts[i].b);
    }
  }
}

template <typename Scalar>
std::vector<Tensor<Scalar>> ExpertBank<Scalar>::trainable_parameters() const {
  std::vector<Tensor<Scalar>> out;
  for (const auto& [name, layer] : layers_)
    for (const auto& e : layer.experts)
      if (e.trainable) {
        out.push_back(e.a);
        out.push_back(e.b);
      }
  return out;
}

template <typename Scalar>
Index ExpertBank<Scalar>::adapter_parameter_count() const {
  Index total = 0;
  for (const auto& p : trainable_parameters()) total += p.numel();
  return total;
}

template <typename Scalar>
ExpertBank<Scalar> ExpertBank<Scalar>::clone() const {
  ExpertBank out(rank_, num_experts_);
  for (const auto& [name, layer] : layers_) {
    Layer copy{layer.dims, {}};
    for (const auto& e : layer.experts) copy.experts.push_back({e.a.clone(), e.b.clone(), e.trainable});
    out.layers_[name] = std::move(copy);
  }
  return out;
}

template <typename Scalar>
ExpertBank<Scalar> init_bank(const std::vector<LayerDims>& layers, Index rank, Index num_experts, std::uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("init_bank: rank must be >= 1");
  if (num_experts < 2) throw std::invalid_argument("init_bank: need the zero expert plus at least one trainable expert");
  ExpertBank<Scalar> bank(rank, num_experts);
  const Rng root(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(rank));
  for (const auto& dims : layers) {
    if (rank >= std::min(dims.d_in, dims.d_out))
      throw std::invalid_argument("init_bank: rank " + std::to_string(rank) + " is not low-rank for layer '" +
                                  dims.name + "'");
    Rng rng = root.derive("bank/" + dims.name);
    typename ExpertBank<Scalar>::Layer layer{dims, {}};
    layer.experts.push_back({Tensor<Scalar>(Shape{dims.d_in, rank}), Tensor<Scalar>(Shape{rank, dims.d_out}), false});
    for (Index i = 1; i < num_experts; ++i) {
      Tensor<Scalar> a(Shape{dims.d_in, rank}, rng.normal_matrix<Scalar>(dims.d_in, rank, stddev), true);
      Tensor<Scalar> b(Shape{rank, dims.d_out}, true);
      layer.experts.push_back({a, b, true});
    }
    bank.add_layer(std::move(layer));
  }
  return bank;
}

namespace {

template <typename Scalar>
void check_experts(const Tensor<Scalar>& weight, std::span<const LoraExpert<Scalar>> experts,
                   const ExpertMixture<Scalar>& mixture) {
  if (mixture.size() != static_cast<Index>(experts.size()))
    throw ShapeError("mixture has " + std::to_string(mixture.size()) + " weights for " +
                     std::to_string(experts.size()) + " experts");
  for (const auto& e : experts) {
    if (e.a.dim(0) != weight.dim(0) || e.b.dim(1) != weight.dim(1))
      throw ShapeError("expert shapes do not match weight " + to_string(weight.shape()));
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> mix_weights(const Tensor<Scalar>& weight, std::span<const LoraExpert<Scalar>> experts,
                           const ExpertMixture<Scalar>& mixture) {
  check_experts(weight, experts, mixture);
  Tensor<Scalar> out = weight;
  for (std::size_t i = 1; i < experts.size(); ++i) {
    if (mixture.weight(static_cast<Index>(i)) == Scalar(0)) continue;
    const auto& e = experts[i];
    out = add(out, mul_scalar(matmul(e.a, e.b), element(mixture.alpha, static_cast<Index>(i))));
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> moe_linear_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                  std::span<const LoraExpert<Scalar>> experts, const ExpertMixture<Scalar>& mixture) {
  check_experts(weight, experts, mixture);
  Tensor<Scalar> out = matmul(x, weight);
  for (std::size_t i = 1; i < experts.size(); ++i) {
    if (mixture.weight(static_cast<Index>(i)) == Scalar(0)) continue;
    const auto& e = experts[i];
    out = add(out, mul_scalar(matmul(matmul(x, e.a), e.b), element(mixture.alpha, static_cast<Index>(i))));
  }
  return out;
}

template <typename Scalar>
GatingLoss<Scalar> gating_loss(const ExpertMixture<Scalar>& mixture, int eta) {
  if (eta != 0 && eta != 1) throw std::invalid_argument("gating_loss: eta must be 0 or 1");
  if (eta == 0) return {Tensor<Scalar>::scalar(Scalar(0)), false};
  const auto floor = static_cast<Scalar>(kGatingLogFloor);
  const bool clamped = mixture.weight(0) < floor;
  return {scale(log_clamped(element(mixture.alpha, 0), floor), Scalar(-1)), clamped};
}

#define MOELORA_INSTANTIATE_BANK(S)                                                                              \
  template struct ExpertMixture<S>;                                                                            \
  template void validate_mixture<S>(const ExpertMixture<S>&, double);                                          \
  template class ExpertBank<S>;                                                                                \
  template ExpertBank<S> init_bank<S>(const std::vector<LayerDims>&, Index, Index, std::uint64_t);             \
  template Tensor<S> mix_weights<S>(const Tensor<S>&, std::span<const LoraExpert<S>>, const ExpertMixture<S>&); \
  template Tensor<S> moe_linear_forward<S>(const Tensor<S>&, const Tensor<S>&, std::span<const LoraExpert<S>>,  \
                                           const ExpertMixture<S>&);                                           \
  template GatingLoss<S> gating_loss<S>(const ExpertMixture<S>&, int);

MOELORA_INSTANTIATE_BANK(float)
MOELORA_INSTANTIATE_BANK(double)

}  // namespace moelora
