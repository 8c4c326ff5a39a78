// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/tokenizer/token_stream.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace moelora {

TokenStream TokenStream::from_tokens(std::span<const PartToken> tokens, Index parts, Index compression,
                                     Index codebook_size) {
  TokenStream s{parts, compression, codebook_size, {}};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.part != static_cast<Index>(i) % parts || t.slot != static_cast<Index>(i) / parts) {
      throw std::invalid_argument("token stream: tokens are not in slot-major part order");
    }
    if (t.index < 0 || t.index >= codebook_size) throw std::out_of_range("token stream: index out of range");
    s.indices.push_back(t.index);
  }
  return s;
}

std::vector<PartToken> TokenStream::tokens() const {
  std::vector<PartToken> out;
  for (std::size_t i = 0; i < indices.size(); ++i)
    out.push_back({static_cast<Index>(i) % parts, indices[i], static_cast<Index>(i) / parts});
  return out;
}

std::string TokenStream::to_json() const {
  nlohmann::json j;
  j["N"] = parts;
  j["l"] = compression;
  j["K"] = codebook_size;
  j["order"] = "slot-major";
  j["tokens"] = indices;
  return j.dump();
}

TokenStream TokenStream::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("order").get<std::string>() != "slot-major") throw std::invalid_argument("token stream: unknown order");
  TokenStream s;
  s.parts = j.at("N").get<Index>();
  s.compression = j.at("l").get<Index>();
  s.codebook_size = j.at("K").get<Index>();
  s.indices = j.at("tokens").get<std::vector<Index>>();
  if (s.parts < 1 || s.indices.size() % static_cast<std::size_t>(s.parts) != 0) {
    throw std::invalid_argument("token stream: token count is not a multiple of N");
  }
  for (Index i : s.indices)
    if (i < 0 || i >= s.codebook_size) throw std::out_of_range("token stream: index out of range");
  return s;
}

void TokenStream::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << to_json() << '\n';
}

TokenStream TokenStream::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("token stream: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace moelora
