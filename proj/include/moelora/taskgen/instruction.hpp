// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Instruction samples and their token layout
//   <ins> I <prompt> P [<mod> x m] <res> R <eor>
// Text parts are words of the symbol vocabulary; motion and pose responses
// are token ids attached once a tokenizer exists.

#pragma once

#include "moelora/lm/vocabulary.hpp"
#include "moelora/taskgen/motion_gen.hpp"

#include <optional>
#include <string>
#include <vector>

namespace moelora {

enum class TaskKind { base, t2m, pose };

const char* to_string(TaskKind t);
TaskKind parse_task(const std::string& s);

enum class BaseOp { copy, reverse, sort, add };

inline constexpr BaseOp kBaseOps[] = {BaseOp::copy, BaseOp::reverse, BaseOp::sort, BaseOp::add};

const char* to_string(BaseOp op);
BaseOp parse_base_op(const std::string& s);

/// Paraphrase templates per task (per operation for base tasks).
inline constexpr Index kInstructionTemplates = 3;

std::vector<std::string> base_instruction(BaseOp op, Index template_id);
std::vector<std::string> t2m_instruction(Index template_id);
std::vector<std::string> pose_instruction(Index template_id);

/// Exact answer of a base task over its prompt symbols.
std::vector<std::string> base_answer(BaseOp op, const std::vector<std::string>& prompt);

struct InstructionSample {
  TaskKind task = TaskKind::base;
  std::optional<BaseOp> op;  // base tasks
  std::vector<std::string> instruction;
  std::vector<std::string> prompt;
  std::vector<std::string> response;  // base tasks: answer words
  std::vector<Index> response_ids;    // motion and pose tasks: token ids
  int eta = 1;                        // 1 iff motion-unrelated
  Index template_id = 0;
  // payloads
  std::optional<MotionSpec> spec;  // t2m and pose
  std::uint64_t motion_seed = 0;
  Index frame = 0;                 // pose: frame index inside the motion
  std::vector<double> feature;     // pose: X_I
};

struct FormattedSample {
  std::vector<Index> ids;
  Index response_begin = 0;  // first response position
  Index response_end = 0;    // one past the last response token (the <eor> position)
  std::vector<Index> gate_ids;        // instruction + prompt ids
  std::vector<Index> modality_slots;  // positions of <mod> tokens
  int eta = 1;
  TaskKind task = TaskKind::base;

  /// Ids up to and including <res>.
  std::vector<Index> prefix() const { return {ids.begin(), ids.begin() + response_begin}; }
};

/// Builds the token layout. Throws std::invalid_argument when a motion or
/// pose sample has no response ids, or when a word is not in `vocab`.
FormattedSample format_instruction(const InstructionSample& sample, const Vocabulary& vocab,
                                   Index modality_tokens = 1);

/// Prompt-only layout (through <res>) for decoding.
FormattedSample format_prompt(const InstructionSample& sample, const Vocabulary& vocab, Index modality_tokens = 1);

/// Response span of a formatted sample, or of a generated continuation.
std::vector<Index> extract_response(const FormattedSample& sample);
std::vector<Index> extract_response(const std::vector<Index>& ids, const Vocabulary& vocab);

}  // namespace moelora
