// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/taskgen/instruction.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace moelora {

const char* to_string(TaskKind t) {
  switch (t) {
    case TaskKind::base: return "base";
    case TaskKind::t2m: return "t2m";
    case TaskKind::pose: return "pose";
  }
  return "base";
}

TaskKind parse_task(const std::string& s) {
  for (TaskKind t : {TaskKind::base, TaskKind::t2m, TaskKind::pose})
    if (s == to_string(t)) return t;
  throw std::invalid_argument("unknown task '" + s + "'");
}

const char* to_string(BaseOp op) {
  switch (op) {
    case BaseOp::copy: return "copy";
    case BaseOp::reverse: return "reverse";
    case BaseOp::sort: return "sort";
    case BaseOp::add: return "add";
  }
  return "copy";
}

BaseOp parse_base_op(const std::string& s) {
  for (BaseOp op : kBaseOps)
    if (s == to_string(op)) return op;
  throw std::invalid_argument("unknown base operation '" + s + "'");
}

namespace {

Index wrap(Index t) { return ((t % kInstructionTemplates) + kInstructionTemplates) % kInstructionTemplates; }

std::vector<std::string> pick(const std::vector<std::vector<std::string>>& options, Index t) {
  return options[static_cast<std::size_t>(wrap(t))];
}

}  // namespace

std::vector<std::string> base_instruction(BaseOp op, Index template_id) {
  switch (op) {
    case BaseOp::copy:
      return pick({{"copy", "the", "symbols"}, {"repeat", "this", "sequence"}, {"echo", "the", "input", "exactly"}},
                  template_id);
    case BaseOp::reverse:
      return pick({{"reverse", "the", "symbols"},
                   {"write", "the", "sequence", "backwards"},
                   {"output", "the", "symbols", "in", "reverse", "order"}},
                  template_id);
    case BaseOp::sort:
      return pick({{"sort", "the", "symbols"},
                   {"arrange", "the", "symbols", "in", "order"},
                   {"output", "the", "sequence", "sorted"}},
                  template_id);
    case BaseOp::add:
      return pick({{"add", "two", "digits", "modulo", "ten"},
                   {"compute", "the", "sum", "mod", "ten"},
                   {"what", "is", "the", "sum", "modulo", "ten"}},
                  template_id);
  }
  return {};
}

std::vector<std::string> t2m_instruction(Index template_id) {
  return pick({{"generate", "a", "sequence", "of", "motion", "tokens", "matching", "the", "following", "human",
                "motion", "description", "."},
               {"create", "a", "motion", "that", "matches", "the", "text"},
               {"produce", "motion", "tokens", "for", "this", "description"}},
              template_id);
}

std::vector<std::string> pose_instruction(Index template_id) {
  return pick({{"please", "output", "this", "person", "'s", "pose"},
               {"estimate", "the", "body", "pose", "shown"},
               {"give", "the", "joints", "of", "this", "person"}},
              template_id);
}

std::vector<std::string> base_answer(BaseOp op, const std::vector<std::string>& prompt) {
  switch (op) {
    case BaseOp::copy: return prompt;
    case BaseOp::reverse: return {prompt.rbegin(), prompt.rend()};
    case BaseOp::sort: {
      auto out = prompt;
      std::sort(out.begin(), out.end());
      return out;
    }
    case BaseOp::add: {
      if (prompt.size() != 3 || prompt[1] != "+" || prompt[0].size() != 1 || prompt[2].size() != 1 ||
          !std::isdigit(static_cast<unsigned char>(prompt[0][0])) ||
          !std::isdigit(static_cast<unsigned char>(prompt[2][0]))) {
        throw std::invalid_argument("add: prompt must be 'd + d'");
      }
      return {std::to_string((prompt[0][0] - '0' + prompt[2][0] - '0') % 10)};
    }
  }
  return {};
}

namespace {

FormattedSample layout(const InstructionSample& sample, const Vocabulary& vocab, Index modality_tokens,
                       bool with_response) {
  FormattedSample out;
  out.eta = sample.eta;
  out.task = sample.task;
  out.ids.push_back(vocab.id(Vocabulary::kIns));
  for (const auto& w : sample.instruction) out.ids.push_back(vocab.id(w));
  out.ids.push_back(vocab.id(Vocabulary::kPrompt));
  for (const auto& w : sample.prompt) out.ids.push_back(vocab.id(w));
  for (const auto& w : sample.instruction) out.gate_ids.push_back(vocab.id(w));
  for (const auto& w : sample.prompt) out.gate_ids.push_back(vocab.id(w));
  if (sample.task == TaskKind::pose) {
    for (Index m = 0; m < modality_tokens; ++m) {
      out.modality_slots.push_back(static_cast<Index>(out.ids.size()));
      out.ids.push_back(vocab.id(Vocabulary::kMod));
    }
  }
  out.ids.push_back(vocab.id(Vocabulary::kRes));
  out.response_begin = static_cast<Index>(out.ids.size());
  if (with_response) {
    if (sample.task == TaskKind::base) {
      for (const auto& w : sample.response) out.ids.push_back(vocab.id(w));
    } else {
      if (sample.response_ids.empty()) {
        throw std::invalid_argument(std::string("format_instruction: ") + to_string(sample.task) +
                                    " sample has no response tokens");
      }
      for (Index id : sample.response_ids) {
        if (id < 0 || id >= vocab.size()) throw std::invalid_argument("format_instruction: response id out of range");
        out.ids.push_back(id);
      }
    }
    out.response_end = static_cast<Index>(out.ids.size());
    out.ids.push_back(vocab.id(Vocabulary::kEor));
  } else {
    out.response_end = out.response_begin;
  }
  return out;
}

}  // namespace

FormattedSample format_instruction(const InstructionSample& sample, const Vocabulary& vocab, Index modality_tokens) {
  return layout(sample, vocab, modality_tokens, true);
}

FormattedSample format_prompt(const InstructionSample& sample, const Vocabulary& vocab, Index modality_tokens) {
  return layout(sample, vocab, modality_tokens, false);
}

std::vector<Index> extract_response(const FormattedSample& sample) {
  return {sample.ids.begin() + sample.response_begin, sample.ids.begin() + sample.response_end};
}

std::vector<Index> extract_response(const std::vector<Index>& ids, const Vocabulary& vocab) {
  const Index res = vocab.id(Vocabulary::kRes);
  const Index eor = vocab.id(Vocabulary::kEor);
  auto begin = std::find(ids.begin(), ids.end(), res);
  if (begin == ids.end()) return {};
  ++begin;
  auto end = std::find(begin, ids.end(), eor);
  return {begin, end};
}

}  // namespace moelora
