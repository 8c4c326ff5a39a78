// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/lm/vocabulary.hpp"

#include <cctype>
#include <stdexcept>

namespace moelora {

namespace {

constexpr Index kBaseTextSize = 256;

const std::vector<std::string>& word_list() {
  static const std::vector<std::string> words = {
      // base tasks
      "copy", "the", "symbols", "repeat", "this", "sequence", "echo", "input", "exactly", "reverse", "write",
      "backwards", "output", "in", "order", "sort", "arrange", "sorted", "add", "two", "digits", "modulo", "ten",
      "compute", "sum", "mod", "what", "is",
      // text-to-motion
      "generate", "a", "of", "motion", "tokens", "matching", "following", "human", "description", ".", "create",
      "for", "produce", "that", "matches", "text", "person", "someone", "who", "walks", "runs", "waves", "squats",
      "circles", "slowly", "quickly", "forward", "to", "left", "right", "frames", ",", "16", "32", "64",
      // pose estimation
      "please", "'s", "pose", "estimate", "body", "shown", "give", "joints"};
  return words;
}

bool is_control(const std::string& s) { return s.size() > 2 && s.front() == '<' && s.back() == '>'; }

}  // namespace

const char* to_string(TokenClass c) {
  switch (c) {
    case TokenClass::text: return "text";
    case TokenClass::control: return "control";
    case TokenClass::motion: return "motion";
    case TokenClass::pose: return "pose";
  }
  return "text";
}

Vocabulary Vocabulary::from_symbols(const std::vector<std::string>& symbols) {
  Vocabulary v;
  for (const auto& s : symbols) {
    if (!v.ids_.emplace(s, static_cast<Index>(v.symbols_.size())).second) {
      throw std::invalid_argument("vocabulary: duplicate symbol '" + s + "'");
    }
    v.symbols_.push_back(s);
  }
  return v;
}

Vocabulary Vocabulary::base() {
  std::vector<std::string> symbols = {kIns, kPrompt, kMod, kRes, kEor, kPad};
  for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
  for (char c = '0'; c <= '9'; ++c) symbols.emplace_back(1, c);
  symbols.emplace_back("+");
  for (const auto& w : word_list()) {
    if (w.size() == 1 && (std::isalnum(static_cast<unsigned char>(w[0])) || w[0] == '+')) continue;
    symbols.push_back(w);
  }
  for (Index k = 0; static_cast<Index>(symbols.size()) < kBaseTextSize; ++k) symbols.push_back("#" + std::to_string(k));
  return from_symbols(symbols);
}

Index Vocabulary::id(const std::string& symbol) const {
  auto it = ids_.find(symbol);
  if (it == ids_.end()) throw std::out_of_range("vocabulary: unknown symbol '" + symbol + "'");
  return it->second;
}

std::string Vocabulary::symbol(Index id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  if (id < text_size()) return symbols_[static_cast<std::size_t>(id)];
  if (auto m = motion_code(id)) return "<motion_" + std::to_string(m->part) + "_" + std::to_string(m->code) + ">";
  const auto p = pose_code(id);
  return "<pose_" + std::to_string(p->part) + "_" + std::to_string(p->code) + ">";
}

TokenClass Vocabulary::token_class(Index id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  if (id < text_size()) return is_control(symbols_[static_cast<std::size_t>(id)]) ? TokenClass::control : TokenClass::text;
  return id < pose_offset() ? TokenClass::motion : TokenClass::pose;
}

Index Vocabulary::motion_id(Index part, Index code) const {
  if (part < 0 || part >= parts_ || code < 0 || code >= codebook_size_) throw std::out_of_range("motion_id: out of range");
  return motion_offset() + part * codebook_size_ + code;
}

Index Vocabulary::pose_id(Index part, Index code) const {
  if (part < 0 || part >= parts_ || code < 0 || code >= codebook_size_) throw std::out_of_range("pose_id: out of range");
  return pose_offset() + part * codebook_size_ + code;
}

std::optional<CodeRef> Vocabulary::motion_code(Index id) const {
  if (id < motion_offset() || id >= pose_offset()) return std::nullopt;
  const Index local = id - motion_offset();
  return CodeRef{local / codebook_size_, local % codebook_size_};
}

std::optional<CodeRef> Vocabulary::pose_code(Index id) const {
  if (id < pose_offset() || id >= size()) return std::nullopt;
  const Index local = id - pose_offset();
  return CodeRef{local / codebook_size_, local % codebook_size_};
}

std::vector<Index> Vocabulary::encode(const std::vector<std::string>& symbols) const {
  std::vector<Index> out;
  out.reserve(symbols.size());
  for (const auto& s : symbols) out.push_back(id(s));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<Index>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (Index i : ids) out.push_back(symbol(i));
  return out;
}

nlohmann::json Vocabulary::manifest() const {
  nlohmann::json j;
  j["text_size"] = text_size();
  j["parts"] = parts_;
  j["codebook_size"] = codebook_size_;
  auto& tokens = j["tokens"] = nlohmann::json::array();
  for (Index i = 0; i < size(); ++i) tokens.push_back({{"token", symbol(i)}, {"id", i}, {"class", to_string(token_class(i))}});
  return j;
}

Vocabulary Vocabulary::from_manifest(const nlohmann::json& manifest) {
  const Index text = manifest.at("text_size").get<Index>();
  std::vector<std::string> symbols;
  for (const auto& t : manifest.at("tokens")) {
    if (t.at("id").get<Index>() >= text) break;
    symbols.push_back(t.at("token").get<std::string>());
  }
  Vocabulary v = from_symbols(symbols);
  const Index parts = manifest.at("parts").get<Index>();
  return parts > 0 ? extend_vocab(v, parts, manifest.at("codebook_size").get<Index>()) : v;
}

Vocabulary extend_vocab(const Vocabulary& base, Index parts, Index codebook_size) {
  if (base.extended()) throw std::invalid_argument("extend_vocab: vocabulary is already extended (id collision)");
  if (parts < 1 || codebook_size < 1) throw std::invalid_argument("extend_vocab: parts and codebook size must be positive");
  for (const auto& s : base.symbols_) {
    if (s.rfind("<motion_", 0) == 0 || s.rfind("<pose_", 0) == 0) {
      throw std::invalid_argument("extend_vocab: text symbol '" + s + "' collides with a modality token name");
    }
  }
  Vocabulary out = base;
  out.parts_ = parts;
  out.codebook_size_ = codebook_size;
  return out;
}

}  // namespace moelora
