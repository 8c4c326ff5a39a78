// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loops: tokenizer (VQ), base language model, and MoE-LoRA
// instruction tuning with L_total = L_fm + L_gat.

#pragma once

#include "moelora/lm/motion_lm.hpp"
#include "moelora/taskgen/datasets.hpp"
#include "moelora/train/config.hpp"

#include <functional>
#include <vector>

namespace moelora {

/// Raised when training produces a non-finite value; the message names the step.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when instruction tuning changes a frozen base parameter.
class FrozenWeightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tokenizer ---------------------------------------------------------------

struct TokenizerLogEntry {
  Index step = 0;
  double rec = 0, emb = 0, com = 0, total = 0;
  Index resets = 0;
};

struct TokenizerRun {
  PartTokenizer<float> tokenizer;
  std::vector<TokenizerLogEntry> log;
  double heldout_mse = 0;  // normalized space
};

/// Joint-space clips [F, J*C] of motion samples (regenerated from spec + seed).
std::vector<Mat<double>> motion_clips(const std::vector<InstructionSample>& samples, const SkeletonSpec& skeleton);
/// One-frame clips [1, J*C] of pose samples.
std::vector<Mat<double>> pose_clips(const std::vector<InstructionSample>& samples, const SkeletonSpec& skeleton);

/// Batches of `window` consecutive frames drawn uniformly from the clips.
TokenizerRun train_tokenizer(const SkeletonSpec& skeleton, const TokenizerTrainConfig& config,
                             const std::vector<Mat<double>>& train, const std::vector<Mat<double>>& test,
                             std::uint64_t seed, const std::function<void(const TokenizerLogEntry&)>& on_log = {});

/// Mean squared reconstruction error in normalized space over whole clips.
double reconstruction_mse(const PartTokenizer<float>& tokenizer, const std::vector<Mat<double>>& clips);

// Base language model ------------------------------------------------------

struct LmLogEntry {
  Index step = 0;
  double loss = 0;
  double lr = 0;
};

/// Next-token cross-entropy over the response and <eor> of each sample.
template <typename Scalar>
Tensor<Scalar> response_loss(const ToyLm<Scalar>& lm, const FormattedSample& sample,
                             const ExpertMixture<Scalar>* mixture = nullptr, const Tensor<Scalar>* modality = nullptr);

ToyLm<float> pretrain_lm(const LmTrainConfig& config, const std::vector<InstructionSample>& train, std::uint64_t seed,
                         std::vector<LmLogEntry>* log = nullptr,
                         const std::function<void(const LmLogEntry&)>& on_log = {});

/// Greedy exact-match accuracy on base-task probes.
double base_task_accuracy(const ToyLm<float>& lm, const std::vector<InstructionSample>& probes);
double base_task_accuracy(const MotionLm<float>& model, const std::vector<InstructionSample>& probes);

// Instruction tuning -------------------------------------------------------

struct TuneItem {
  FormattedSample sample;
  std::vector<float> feature;  // pose tasks
};

struct TuneData {
  std::vector<TuneItem> t2m;
  std::vector<TuneItem> pose;
  std::vector<TuneItem> gate;          // eta = 1 prompts, gating loss only
  std::vector<TuneItem> heldout_gate;  // logged, never trained on
};

/// Attaches motion token ids (slot-major, part-fastest) to t2m samples.
void attach_motion_tokens(std::vector<InstructionSample>& samples, const PartTokenizer<float>& tokenizer,
                          const Vocabulary& vocab, const SkeletonSpec& skeleton);
/// Attaches pose token ids to pose samples.
void attach_pose_tokens(std::vector<InstructionSample>& samples, const PartTokenizer<float>& tokenizer,
                        const Vocabulary& vocab, const SkeletonSpec& skeleton);

std::vector<TuneItem> make_items(const std::vector<InstructionSample>& samples, const Vocabulary& vocab,
                                 Index modality_tokens);

struct TuneLogEntry {
  Index step = 0;
  double fm = 0;   // mean L_fm over the LM samples of the batch
  double gat = 0;  // mean L_gat over the eta = 1 samples of the batch
  double lr = 0;
  double heldout_gat = -1;  // mean L_gat on held-out eta = 1 prompts, when logged
};

/// Per-sample loss; `fm` and `gat` receive the components.
Tensor<float> tune_sample_loss(const MotionLm<float>& model, const TuneItem& item, bool gating_loss, double* fm,
                               double* gat);

/// Batch slot order for the configured mixing ratios.
std::vector<TaskKind> mixing_schedule(const TuneConfig& config);

/// Trains experts, gating, extension rows and projector. Throws
/// FrozenWeightError if the base parameters change.
std::vector<TuneLogEntry> instruction_tune(MotionLm<float>& model, const TuneConfig& config, const TuneData& data,
                                           std::uint64_t seed, Index log_every = 10,
                                           const std::function<void(const TuneLogEntry&)>& on_log = {});

/// Slot-major motion tokens from generated ids, or nullopt when the ids are
/// not a non-empty sequence of whole slots in part order.
std::optional<std::vector<PartToken>> motion_tokens_from_ids(const std::vector<Index>& ids, const Vocabulary& vocab);
std::optional<std::vector<PartToken>> pose_tokens_from_ids(const std::vector<Index>& ids, const Vocabulary& vocab);

}  // namespace moelora
