// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/lm/motion_lm.hpp"

namespace moelora {

template <typename Scalar>
MotionLm<Scalar>::MotionLm(ToyLm<Scalar> base, MotionLmConfig config, std::uint64_t seed)
    : lm_(std::move(base)), config_(config) {
  if (!lm_.vocab().extended()) throw std::invalid_argument("MotionLm: base model vocabulary is not extended");
  if (config_.modality_tokens < 1) throw std::invalid_argument("MotionLm: modality_tokens must be >= 1");
  Rng root(seed);
  lm_.attach_bank(init_bank<Scalar>(lm_.adapted_layers(), config_.rank, config_.experts, root.derive("bank").seed()));
  gating_ = GatingNetwork<Scalar>(config_.gate_dim, config_.gate_hidden, config_.experts, root.derive("gating").seed());
  prompt_encoder_ = PromptEncoder<Scalar>(lm_.vocab().text_size(), config_.gate_dim, root.derive("prompt").seed());
  Rng prng = root.derive("projector");
  projector_ = Linear<Scalar>::init(config_.feature_dim, config_.modality_tokens * lm_.dim(), prng);
}

template <typename Scalar>
Tensor<Scalar> MotionLm<Scalar>::gate_feature(std::span<const Index> text_ids) const {
  return prompt_encoder_.encode(text_ids);
}

template <typename Scalar>
ExpertMixture<Scalar> MotionLm<Scalar>::route(std::span<const Index> text_ids) const {
  return gating_.gate(gate_feature(text_ids));
}

template <typename Scalar>
Tensor<Scalar> MotionLm<Scalar>::project_modality(const Tensor<Scalar>& feature) const {
  if (feature.numel() != config_.feature_dim) {
    throw ShapeError("project_modality: feature has " + std::to_string(feature.numel()) + " values, expected " +
                     std::to_string(config_.feature_dim));
  }
  Tensor<Scalar> row = reshape(feature, {1, config_.feature_dim});
  return reshape(projector_(row), {config_.modality_tokens, lm_.dim()});
}

template <typename Scalar>
std::vector<Tensor<Scalar>> MotionLm<Scalar>::trainable_parameters() {
  std::vector<Tensor<Scalar>> out;
  visit([&](const std::string&, Tensor<Scalar>& t) {
    if (t.requires_grad()) out.push_back(t);
  });
  return out;
}

template <typename Scalar>
Index MotionLm<Scalar>::trainable_parameter_count() {
  Index n = 0;
  for (const auto& t : trainable_parameters()) n += t.numel();
  return n;
}

template <typename Scalar>
void MotionLm<Scalar>::visit(const ParamVisitor<Scalar>& fn) {
  lm_.visit(fn);
  gating_.visit(fn);
  prompt_encoder_.visit(fn);
  projector_.visit("projector", fn);
}

template <typename Scalar>
void MotionLm<Scalar>::save(Checkpoint& ckpt) {
  lm_.save(ckpt);
  gating_.visit([&](const std::string& name, Tensor<Scalar>& t) { ckpt.put(name, t); });
  prompt_encoder_.visit([&](const std::string& name, Tensor<Scalar>& t) { ckpt.put(name, t); });
  projector_.visit("projector", [&](const std::string& name, Tensor<Scalar>& t) { ckpt.put(name, t); });
  ckpt.meta()["motion_lm"] = {{"experts", config_.experts},         {"rank", config_.rank},
                              {"gate_dim", config_.gate_dim},       {"gate_hidden", config_.gate_hidden},
                              {"feature_dim", config_.feature_dim}, {"modality_tokens", config_.modality_tokens}};
}

template <typename Scalar>
MotionLm<Scalar> MotionLm<Scalar>::from_checkpoint(const Checkpoint& ckpt) {
  const auto& meta = ckpt.meta();
  if (!meta.contains("motion_lm")) throw CheckpointError("checkpoint has no tuned-model metadata");
  const auto& m = meta.at("motion_lm");
  MotionLmConfig config;
  config.experts = m.at("experts").get<Index>();
  config.rank = m.at("rank").get<Index>();
  config.gate_dim = m.at("gate_dim").get<Index>();
  config.gate_hidden = m.at("gate_hidden").get<Index>();
  config.feature_dim = m.at("feature_dim").get<Index>();
  config.modality_tokens = m.at("modality_tokens").get<Index>();
  MotionLm out;
  out.config_ = config;
  out.lm_ = ToyLm<Scalar>::from_checkpoint(ckpt);
  out.gating_ = GatingNetwork<Scalar>(config.gate_dim, config.gate_hidden, config.experts, 0);
  out.prompt_encoder_ = PromptEncoder<Scalar>(out.lm_.vocab().text_size(), config.gate_dim, 0);
  Rng rng(0);
  out.projector_ = Linear<Scalar>::init(config.feature_dim, config.modality_tokens * out.lm_.dim(), rng);
  auto restore = [&](const std::string& name, Tensor<Scalar>& t) {
    const bool grad = t.requires_grad();
    ckpt.restore(name, t);
    t.set_requires_grad(grad);
  };
  out.gating_.visit(restore);
  out.prompt_encoder_.visit(restore);
  out.projector_.visit("projector", restore);
  return out;
}

template class MotionLm<float>;
template class MotionLm<double>;

}  // namespace moelora
