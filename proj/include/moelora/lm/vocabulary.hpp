// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Symbol vocabulary of the toy language: one token per symbol, control tokens
// first, then letters, digits, operators, words and filler symbols up to a
// fixed text size. Extension appends motion ids, then pose ids, each laid out
// part-major (id = offset + part * K + code).

#pragma once

#include "moelora/core/tensor.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace moelora {

enum class TokenClass { text, control, motion, pose };

const char* to_string(TokenClass c);

struct CodeRef {
  Index part = 0;
  Index code = 0;
};

class Vocabulary {
 public:
  static constexpr const char* kIns = "<ins>";
  static constexpr const char* kPrompt = "<prompt>";
  static constexpr const char* kMod = "<mod>";
  static constexpr const char* kRes = "<res>";
  static constexpr const char* kEor = "<eor>";
  static constexpr const char* kPad = "<pad>";

  /// The fixed 256-symbol text vocabulary.
  static Vocabulary base();
  /// Text vocabulary from explicit symbols (control tokens are those in <...>).
  static Vocabulary from_symbols(const std::vector<std::string>& symbols);

  Index text_size() const { return static_cast<Index>(symbols_.size()); }
  Index size() const { return text_size() + 2 * parts_ * codebook_size_; }
  Index parts() const { return parts_; }
  Index codebook_size() const { return codebook_size_; }
  bool extended() const { return parts_ > 0; }

  bool contains(const std::string& symbol) const { return ids_.count(symbol) != 0; }
  /// Throws std::out_of_range for an unknown symbol.
  Index id(const std::string& symbol) const;
  std::string symbol(Index id) const;
  TokenClass token_class(Index id) const;

  Index motion_offset() const { return text_size(); }
  Index pose_offset() const { return text_size() + parts_ * codebook_size_; }
  Index motion_id(Index part, Index code) const;
  Index pose_id(Index part, Index code) const;
  std::optional<CodeRef> motion_code(Index id) const;
  std::optional<CodeRef> pose_code(Index id) const;

  std::vector<Index> encode(const std::vector<std::string>& symbols) const;
  std::vector<std::string> decode(const std::vector<Index>& ids) const;

  /// (token string, id, class) for every id.
  nlohmann::json manifest() const;
  static Vocabulary from_manifest(const nlohmann::json& manifest);

 private:
  friend Vocabulary extend_vocab(const Vocabulary&, Index, Index);

  std::vector<std::string> symbols_;
  std::unordered_map<std::string, Index> ids_;
  Index parts_ = 0;
  Index codebook_size_ = 0;
};

/// Appends N*K motion ids and N*K pose ids after the text ids.
Vocabulary extend_vocab(const Vocabulary& base, Index parts, Index codebook_size);

}  // namespace moelora
