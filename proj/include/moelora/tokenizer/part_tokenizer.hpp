// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Body-part pose/motion tokenizer. A masked spatial transformer summarizes
// each frame into one latent per body part, an optional temporal convolution
// stack compresses those latents by l along time, and every part owns its
// codebook. Decoding mirrors the encoder.
//
// Row layouts (B sequences, F frames, F' = F / l slots, N parts, J joints):
//   joint features  [B*F*J, C]   frame-major, joints fastest
//   part latents    [B*F*N, S]   frame-major, parts fastest
//   token latents   [B*F'*N, S]  slot-major, parts fastest

#pragma once

#include "moelora/core/checkpoint.hpp"
#include "moelora/core/nn.hpp"
#include "moelora/tokenizer/codebook.hpp"
#include "moelora/tokenizer/skeleton.hpp"

#include <span>
#include <vector>

namespace moelora {

struct TokenizerConfig {
  Index model_dim = 128;
  Index heads = 4;
  Index layers = 2;
  Index mlp_dim = 256;
  Index code_dim = 512;       // S
  Index codebook_size = 512;  // K per part
  Index temporal_stages = 2;  // each halves the frame count; 0 for a pose tokenizer
  double commitment = 0.02;   // lambda_com
  bool ema = false;
  double ema_decay = 0.99;
  Index dead_window = 256;

  Index compression() const { return Index(1) << temporal_stages; }
};

struct PartToken {
  Index part = 0;
  Index index = 0;
  Index slot = 0;

  bool operator==(const PartToken&) const = default;
};

template <typename Scalar>
struct VqLoss {
  Tensor<Scalar> rec;    // MSE(x, x_hat)
  Tensor<Scalar> emb;    // sum over parts of mean ||sg(z_hat) - z||^2
  Tensor<Scalar> com;    // sum over parts of mean ||z_hat - sg(z)||^2
  Tensor<Scalar> total;  // rec + emb + lambda * com
};

template <typename Scalar>
VqLoss<Scalar> vq_loss(const Tensor<Scalar>& x, const Tensor<Scalar>& x_hat,
                       std::span<const Tensor<Scalar>> encoded_parts, std::span<const Tensor<Scalar>> quantized_parts,
                       Scalar commitment);

template <typename Scalar>
struct ResidualConvBlock {
  Conv1d<Scalar> conv1, conv2;

  static ResidualConvBlock init(Index channels, Rng& rng);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Index batch) const;
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& fn);
};

/// Strided conv stages shared by every part; parts run as separate sequences.
template <typename Scalar>
struct TemporalCompressor {
  std::vector<Conv1d<Scalar>> down;
  std::vector<ResidualConvBlock<Scalar>> blocks;
  Linear<Scalar> out;

  static TemporalCompressor init(Index channels, Index stages, Rng& rng);
  Index ratio() const { return Index(1) << down.size(); }
  /// x: [batch*F, S] sequence-major; returns [batch*F/l, S].
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Index batch, Index frames) const;
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& fn);
};

/// Upsampling mirror of TemporalCompressor.
template <typename Scalar>
struct TemporalExpander {
  Linear<Scalar> in;
  std::vector<ResidualConvBlock<Scalar>> blocks;
  std::vector<Conv1d<Scalar>> up;

  static TemporalExpander init(Index channels, Index stages, Rng& rng);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Index batch, Index slots) const;
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& fn);
};

template <typename Scalar>
class PartTokenizer {
 public:
  struct Quantized {
    std::vector<Index> indices;                  // one per token-latent row
    std::vector<Tensor<Scalar>> encoded_parts;   // per part [B*F', S]
    std::vector<Tensor<Scalar>> quantized_parts; // per part [B*F', S]
    Tensor<Scalar> straight;                     // token-latent layout
  };

  struct Step {
    VqLoss<Scalar> loss;
    Tensor<Scalar> reconstruction;
    Quantized quantized;
  };

  PartTokenizer() = default;
  PartTokenizer(SkeletonSpec skeleton, TokenizerConfig config, std::uint64_t seed);

  const SkeletonSpec& skeleton() const { return skeleton_; }
  const TokenizerConfig& config() const { return config_; }
  Index parts() const { return skeleton_.parts(); }
  Index compression() const { return config_.compression(); }

  /// [F, J*C] joint space -> [F*J, C] normalized rows.
  Mat<Scalar> normalize(const Mat<double>& frames) const;
  Mat<double> denormalize(const Mat<Scalar>& rows, Index frames) const;

  /// [B*F*J, C] -> part latents with shape {B*F, N, S}.
  Tensor<Scalar> spatial_encode(const Tensor<Scalar>& x, Index frames) const;
  /// Part latents [B*F*N, S] -> token latents [B*F'*N, S].
  Tensor<Scalar> temporal_compress(const Tensor<Scalar>& latents, Index batch, Index frames) const;
  Tensor<Scalar> encode(const Tensor<Scalar>& x, Index batch, Index frames) const;
  /// Token latents -> joint features [B*F*J, C].
  Tensor<Scalar> decode_latents(const Tensor<Scalar>& z, Index batch, Index slots) const;

  /// Nearest entries per part; `record` updates usage counters.
  Quantized quantize_latents(const Tensor<Scalar>& latents, bool record);
  Quantized quantize_latents(const Tensor<Scalar>& latents) const;

  /// Forward pass with VQ losses on normalized rows [B*F*J, C].
  Step forward_train(const Mat<Scalar>& x, Index batch, Index frames);
  /// Closes a training batch: EMA codebook update (EMA mode) and idle counters.
  void end_batch(const Quantized& q);
  /// Runs dead-entry resets against the latest encoder outputs.
  CodebookReport codebook_health(Rng& rng);

  /// Seeds every codebook from random rows of one batch of encoder outputs.
  void init_codebooks(const Tensor<Scalar>& latents, Rng& rng);
  bool codebooks_initialized() const;

  std::vector<PartToken> tokenize_pose(const Pose& pose) const;
  std::vector<PartToken> tokenize_motion(const MotionSequence& motion) const;
  Pose decode_pose(std::span<const PartToken> tokens) const;
  MotionSequence decode_motion(std::span<const PartToken> tokens, double fps = 20.0) const;

  /// Batched index forms over normalized rows; indices are slot-major.
  std::vector<Index> encode_indices(const Mat<Scalar>& x, Index batch, Index frames) const;
  /// Returns [B*F*J, C] normalized rows.
  Mat<Scalar> decode_indices(std::span<const Index> indices, Index batch, Index slots) const;

  std::vector<PartCodebook<Scalar>>& codebooks() { return codebooks_; }
  const std::vector<PartCodebook<Scalar>>& codebooks() const { return codebooks_; }

  /// Every tensor under its checkpoint name (tok/...).
  void visit(const ParamVisitor<Scalar>& fn);
  std::vector<Tensor<Scalar>> parameters();
  void save(Checkpoint& ckpt);
  void load(const Checkpoint& ckpt);

 private:
  void check_tokens(std::span<const PartToken> tokens, Index slots) const;

  SkeletonSpec skeleton_;
  TokenizerConfig config_;
  AttentionMask mask_;
  // encoder
  Linear<Scalar> joint_in_;
  Tensor<Scalar> joint_pos_;    // [J, d]
  Tensor<Scalar> part_tokens_;  // [N, d]
  std::vector<TransformerBlock<Scalar>> enc_blocks_;
  LayerNorm<Scalar> enc_norm_;
  Linear<Scalar> enc_out_;
  TemporalCompressor<Scalar> compressor_;
  // decoder
  TemporalExpander<Scalar> expander_;
  Linear<Scalar> dec_in_;
  Tensor<Scalar> joint_queries_;  // [J, d]
  std::vector<TransformerBlock<Scalar>> dec_blocks_;
  LayerNorm<Scalar> dec_norm_;
  Linear<Scalar> dec_out_;

  std::vector<PartCodebook<Scalar>> codebooks_;
  std::vector<Mat<Scalar>> recent_;
};

}  // namespace moelora
