// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer over the symbol vocabulary. Embedding and head
// rows are stored as a base block (text ids) and an extension block
// (motion and pose ids) so the base block can stay frozen and the text
// logits stay bit-identical while the extension trains.

#pragma once

#include "moelora/adapter/expert_bank.hpp"
#include "moelora/core/checkpoint.hpp"
#include "moelora/core/nn.hpp"
#include "moelora/lm/vocabulary.hpp"

#include <optional>
#include <span>

namespace moelora {

struct LmConfig {
  Index layers = 4;
  Index heads = 4;
  Index model_dim = 128;
  Index mlp_dim = 512;
  Index context = 128;
  double extension_init_std = 0.02;
};

template <typename Scalar>
struct LmBlock {
  LayerNorm<Scalar> ln1, ln2;
  Linear<Scalar> q, k, v, o, up, down;
};

template <typename Scalar>
class ToyLm {
 public:
  ToyLm() = default;
  ToyLm(Vocabulary vocab, LmConfig config, std::uint64_t seed);

  const Vocabulary& vocab() const { return vocab_; }
  const LmConfig& config() const { return config_; }
  Index dim() const { return config_.model_dim; }

  /// Appends motion and pose rows (small Gaussian init) and freezes every base parameter.
  void extend(Index parts, Index codebook_size, std::uint64_t seed);
  /// Every adapted linear: block<l>/{q,k,v,o,up,down}. The head is not adapted.
  std::vector<LayerDims> adapted_layers() const;
  void attach_bank(ExpertBank<Scalar> bank);
  bool has_bank() const { return bank_.num_experts() > 0; }
  ExpertBank<Scalar>& bank() { return bank_; }
  const ExpertBank<Scalar>& bank() const { return bank_; }

  /// Final-normed hidden states [T, d]. Each `<mod>` id takes the next row of
  /// `modality` when it is given. A null mixture runs the base weights only.
  Tensor<Scalar> hidden(std::span<const Index> ids, const ExpertMixture<Scalar>* mixture = nullptr,
                        const Tensor<Scalar>* modality = nullptr) const;
  /// [rows, |V|] logits from hidden rows.
  Tensor<Scalar> head(const Tensor<Scalar>& hidden) const;
  Tensor<Scalar> forward(std::span<const Index> ids, const ExpertMixture<Scalar>* mixture = nullptr,
                         const Tensor<Scalar>* modality = nullptr) const {
    return head(hidden(ids, mixture, modality));
  }

  void set_base_trainable(bool trainable);
  std::vector<Tensor<Scalar>> base_parameters();
  std::vector<Tensor<Scalar>> extension_parameters();
  /// FNV-1a over the bytes of every base parameter.
  std::uint64_t base_hash();

  /// lm/... names for base and extension tensors, then bank/... for the experts.
  void visit(const ParamVisitor<Scalar>& fn);
  /// Copy with every adapted weight replaced by W + sum_i alpha_i A_i B_i and no bank.
  ToyLm merged(const ExpertMixture<Scalar>& mixture) const;
  ToyLm clone() const;

  void save(Checkpoint& ckpt);
  /// Restores into a model of identical structure.
  void load(const Checkpoint& ckpt);
  /// Rebuilds structure (vocabulary, dims, extension, bank) from the metadata, then loads.
  static ToyLm from_checkpoint(const Checkpoint& ckpt);

 private:
  void visit_base(const ParamVisitor<Scalar>& fn);
  Tensor<Scalar> linear(const Linear<Scalar>& layer, const std::string& name, const Tensor<Scalar>& x,
                        const ExpertMixture<Scalar>* mixture) const;
  Tensor<Scalar> embedding_table() const;

  Vocabulary vocab_;
  LmConfig config_;
  Tensor<Scalar> embed_base_;  // [V_T, d]
  Tensor<Scalar> embed_ext_;   // [2NK, d] once extended
  Tensor<Scalar> pos_;         // [context, d]
  std::vector<LmBlock<Scalar>> blocks_;
  LayerNorm<Scalar> final_norm_;
  Tensor<Scalar> head_base_;  // [d, V_T]
  Tensor<Scalar> head_ext_;   // [d, 2NK]
  ExpertBank<Scalar> bank_;
};

enum class DecodeMode { greedy, top_k };

/// Response grammar. `motion` admits whole slots of motion tokens in part
/// order and ends only on a slot boundary; `pose` admits one pose token per
/// part in order, then the end token.
enum class ResponseGrammar { free, motion, pose };

struct GenerateOptions {
  Index max_len = 96;
  DecodeMode mode = DecodeMode::greedy;
  ResponseGrammar grammar = ResponseGrammar::free;
  Index top_k = 1;
  std::uint64_t seed = 0;
};

struct Generation {
  std::vector<Index> tokens;  // without the end token
  bool stopped = false;       // false when max_len was hit first
};

/// Autoregressive decoding after `prefix` until <eor> or max_len.
template <typename Scalar>
Generation generate(const ToyLm<Scalar>& model, std::span<const Index> prefix, const ExpertMixture<Scalar>* mixture,
                    const Tensor<Scalar>* modality, const GenerateOptions& options);

}  // namespace moelora
