// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moelora/tokenizer/part_tokenizer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace moelora {

/// Serialized token sequence: a header (N, l, K, order) and flat indices.
struct TokenStream {
  Index parts = 0;
  Index compression = 1;
  Index codebook_size = 0;
  std::vector<Index> indices;  // slot-major, parts fastest

  static TokenStream from_tokens(std::span<const PartToken> tokens, Index parts, Index compression,
                                 Index codebook_size);
  std::vector<PartToken> tokens() const;

  std::string to_json() const;
  static TokenStream from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static TokenStream load(const std::filesystem::path& path);
};

}  // namespace moelora
