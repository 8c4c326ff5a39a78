// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical run configuration. Built-in defaults form the schema: a file
// or an override may only set keys that already exist, with a value of the
// same type. Precedence is override > file > default.

#pragma once

#include "moelora/lm/motion_lm.hpp"
#include "moelora/tokenizer/part_tokenizer.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace moelora {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using RunConfig = nlohmann::json;

/// Every key with its default value.
RunConfig default_config();

/// One-line help per dotted key, naming where each default comes from.
const std::vector<std::pair<std::string, std::string>>& config_help();

/// Merges `patch` into `config`; unknown keys and type changes throw.
void merge_config(RunConfig& config, const nlohmann::json& patch, const std::string& origin = "config");

/// Applies "key=value". The key is a dotted path or a leaf name that is
/// unique across the tree. The value is parsed as JSON when possible,
/// otherwise taken as a string.
void apply_override(RunConfig& config, const std::string& assignment);

/// Defaults, then the file (if non-empty), then each override in order.
RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides);

/// 16 hex digits of FNV-1a over the canonical dump.
std::string config_fingerprint(const RunConfig& config);

/// Throws ConfigError when an invariant is violated (positive rates,
/// batch = micro_batch * accumulation, and so on).
void validate_config(const RunConfig& config);

// Typed views.

struct TokenizerTrainConfig {
  TokenizerConfig model;
  double lr = 2e-4;
  Index steps = 1000;
  Index batch = 8;
  Index window = 16;
  Index reset_every = 50;
  Index train_samples = 1000;
  Index test_samples = 100;
};

struct LmTrainConfig {
  LmConfig model;
  double lr = 1e-3;
  double min_lr = 1e-4;
  Index steps = 3000;
  Index batch = 32;
  Index train_samples = 20000;
  Index probe_samples = 200;
};

struct TuneConfig {
  MotionLmConfig model;
  double lr = 3e-3;
  double min_lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.0;
  Index batch = 32;
  Index micro_batch = 2;
  Index steps = 300;
  bool gating_loss = true;
  double t2m_ratio = 0.375;
  double pose_ratio = 0.375;
  double gate_ratio = 0.25;
  Index t2m_samples = 2000;
  Index pose_samples = 2000;
  Index gate_samples = 2000;
  Index accumulation() const { return batch / micro_batch; }
};

struct EvalConfig {
  Index t2m_samples = 200;
  Index pose_samples = 200;
  Index probe_samples = 200;
  Index routing_samples = 200;
  Index retrieval_candidates = 32;
  Index diversity_subset = 300;
  Index max_motion_frames = 64;
};

struct BenchConfig {
  Index min_experts = 1;
  Index max_experts = 8;
  Index tokens = 84;
  Index runs = 50;
  Index warmup = 5;
  Index train_steps = 2;
  Index tune_steps = 0;
};

struct AblateConfig {
  Index steps = 1000;
};

TokenizerTrainConfig tokenizer_config(const RunConfig& config, const std::string& section = "tokenizer");
LmTrainConfig lm_config(const RunConfig& config);
TuneConfig tune_config(const RunConfig& config);
EvalConfig eval_config(const RunConfig& config);
BenchConfig bench_config(const RunConfig& config);
AblateConfig ablate_config(const RunConfig& config);
std::uint64_t config_seed(const RunConfig& config);

}  // namespace moelora
