// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Config-driven stages shared by the command-line tool and the acceptance
// suite. Dataset seeds derive from the run seed, so every stage is a pure
// function of the resolved config.

#pragma once

#include "moelora/taskgen/dataset_io.hpp"
#include "moelora/train/experiments.hpp"

namespace moelora {

/// Seed of one generated dataset role ("t2m", "pose", "base", "gate", ...).
std::uint64_t data_seed(const RunConfig& config, const std::string& role);

/// Generated samples for a task ("base", "t2m", "pose", "gating") and split.
std::vector<InstructionSample> stage_samples(const RunConfig& config, const std::string& task, Index n, Split split,
                                             const std::string& role = "");

/// Trains the motion ("tokenizer" section) or pose ("pose_tokenizer") tokenizer.
TokenizerRun stage_train_tokenizer(const RunConfig& config, const std::string& section,
                                   const std::function<void(const TokenizerLogEntry&)>& on_log = {});

ToyLm<float> stage_pretrain(const RunConfig& config, std::vector<LmLogEntry>* log = nullptr,
                            const std::function<void(const LmLogEntry&)>& on_log = {});

/// Extends a copy of the pretrained model and attaches a fresh bank, gating
/// network and projector.
MotionLm<float> stage_motion_lm(const RunConfig& config, const ToyLm<float>& pretrained);

/// Tokenized tuning data for `model`'s vocabulary.
TuneData stage_tune_data(const RunConfig& config, const MotionLm<float>& model, const PartTokenizer<float>& motion,
                         const PartTokenizer<float>& pose);

struct TuneRun {
  MotionLm<float> model;
  std::vector<TuneLogEntry> log;
};

TuneRun stage_tune(const RunConfig& config, const ToyLm<float>& pretrained, const PartTokenizer<float>& motion,
                   const PartTokenizer<float>& pose, const std::function<void(const TuneLogEntry&)>& on_log = {});

/// Held-out evaluation sets.
std::vector<InstructionSample> stage_probes(const RunConfig& config);
std::vector<InstructionSample> stage_t2m_test(const RunConfig& config);
std::vector<InstructionSample> stage_pose_test(const RunConfig& config);

}  // namespace moelora
