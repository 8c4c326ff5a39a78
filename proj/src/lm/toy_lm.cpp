// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/lm/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace moelora {

namespace {

const char* const kLinearNames[] = {"q", "k", "v", "o", "up", "down"};

template <typename Scalar>
Linear<Scalar>& linear_of(LmBlock<Scalar>& b, int i) {
  switch (i) {
    case 0: return b.q;
    case 1: return b.k;
    case 2: return b.v;
    case 3: return b.o;
    case 4: return b.up;
    default: return b.down;
  }
}

}  // namespace

template <typename Scalar>
ToyLm<Scalar>::ToyLm(Vocabulary vocab, LmConfig config, std::uint64_t seed)
    : vocab_(std::move(vocab)), config_(config) {
  if (config_.model_dim % config_.heads != 0) throw std::invalid_argument("lm: model_dim must divide into heads");
  if (vocab_.extended()) throw std::invalid_argument("lm: construct from the text vocabulary, then extend");
  const Index d = config_.model_dim;
  Rng rng = Rng(seed).derive("lm");
  embed_base_ = Tensor<Scalar>({vocab_.text_size(), d}, rng.normal_matrix<Scalar>(vocab_.text_size(), d, 1.0), true);
  pos_ = Tensor<Scalar>({config_.context, d}, rng.normal_matrix<Scalar>(config_.context, d, 0.1), true);
  const double out_gain = 1.0 / std::sqrt(2.0 * static_cast<double>(config_.layers));
  for (Index l = 0; l < config_.layers; ++l) {
    LmBlock<Scalar> b;
    b.ln1 = LayerNorm<Scalar>::init(d);
    b.ln2 = LayerNorm<Scalar>::init(d);
    b.q = Linear<Scalar>::init(d, d, rng);
    b.k = Linear<Scalar>::init(d, d, rng);
    b.v = Linear<Scalar>::init(d, d, rng);
    b.o = Linear<Scalar>::init(d, d, rng, true, out_gain);
    b.up = Linear<Scalar>::init(d, config_.mlp_dim, rng);
    b.down = Linear<Scalar>::init(config_.mlp_dim, d, rng, true, out_gain);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = LayerNorm<Scalar>::init(d);
  head_base_ = Tensor<Scalar>({d, vocab_.text_size()}, rng.normal_matrix<Scalar>(d, vocab_.text_size(), 1.0 / std::sqrt(double(d))), true);
}

template <typename Scalar>
void ToyLm<Scalar>::extend(Index parts, Index codebook_size, std::uint64_t seed) {
  vocab_ = extend_vocab(vocab_, parts, codebook_size);
  const Index added = vocab_.size() - vocab_.text_size();
  const Index d = config_.model_dim;
  Rng rng = Rng(seed).derive("lm/extension");
  embed_ext_ = Tensor<Scalar>({added, d}, rng.normal_matrix<Scalar>(added, d, config_.extension_init_std), true);
  head_ext_ = Tensor<Scalar>({d, added}, rng.normal_matrix<Scalar>(d, added, config_.extension_init_std), true);
  set_base_trainable(false);
}

template <typename Scalar>
std::vector<LayerDims> ToyLm<Scalar>::adapted_layers() const {
  std::vector<LayerDims> out;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto& b = const_cast<LmBlock<Scalar>&>(blocks_[l]);
    for (int i = 0; i < 6; ++i) {
      const auto& w = linear_of(b, i).weight;
      out.push_back({"block" + std::to_string(l) + "/" + kLinearNames[i], w.dim(0), w.dim(1)});
    }
  }
  return out;
}

template <typename Scalar>
void ToyLm<Scalar>::attach_bank(ExpertBank<Scalar> bank) {
  for (const auto& dims : adapted_layers()) {
    if (!bank.has_layer(dims.name)) throw std::invalid_argument("attach_bank: bank lacks layer " + dims.name);
    const auto& layer = bank.layer(dims.name);
    if (layer.dims.d_in != dims.d_in || layer.dims.d_out != dims.d_out) {
      throw ShapeError("attach_bank: layer " + dims.name + " has mismatched dimensions");
    }
  }
  bank_ = std::move(bank);
}

template <typename Scalar>
Tensor<Scalar> ToyLm<Scalar>::linear(const Linear<Scalar>& layer, const std::string& name, const Tensor<Scalar>& x,
                                     const ExpertMixture<Scalar>* mixture) const {
  if (!mixture || !has_bank()) return layer(x);
  const auto& experts = bank_.layer(name).experts;
  Tensor<Scalar> y = moe_linear_forward<Scalar>(x, layer.weight, std::span<const LoraExpert<Scalar>>(experts), *mixture);
  return layer.bias.defined() ? add_bias(y, layer.bias) : y;
}

template <typename Scalar>
Tensor<Scalar> ToyLm<Scalar>::hidden(std::span<const Index> ids, const ExpertMixture<Scalar>* mixture,
                                     const Tensor<Scalar>* modality) const {
  const Index t = static_cast<Index>(ids.size());
  if (t < 1 || t > config_.context) {
    throw std::invalid_argument("lm: sequence length " + std::to_string(t) + " outside [1, " +
                                std::to_string(config_.context) + "]");
  }
  if (mixture && has_bank() && mixture->size() != bank_.num_experts()) {
    throw ShapeError("lm: mixture has " + std::to_string(mixture->size()) + " weights for " +
                     std::to_string(bank_.num_experts()) + " experts");
  }
  const Index mod_id = vocab_.id(Vocabulary::kMod);
  const Index text = vocab_.text_size();
  std::vector<Index> base_ids, ext_ids, order(static_cast<std::size_t>(t));
  std::vector<std::pair<std::size_t, Index>> slots;  // (position, kind) resolved below
  Index mod_rows = modality ? modality->value().rows() : 0;
  if (modality && modality->value().cols() != dim()) throw ShapeError("lm: modality embeddings must be model-dim");
  Index mod_used = 0;
  for (Index i = 0; i < t; ++i) {
    const Index id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= vocab_.size()) throw std::out_of_range("lm: token id " + std::to_string(id) + " out of range");
    if (modality && id == mod_id) {
      if (mod_used >= mod_rows) throw std::invalid_argument("lm: more <mod> placeholders than modality rows");
      slots.emplace_back(static_cast<std::size_t>(i), 2);
      ++mod_used;
    } else if (id < text) {
      slots.emplace_back(static_cast<std::size_t>(i), 0);
      base_ids.push_back(id);
    } else {
      slots.emplace_back(static_cast<std::size_t>(i), 1);
      ext_ids.push_back(id - text);
    }
  }
  if (modality && mod_used != mod_rows) {
    throw std::invalid_argument("lm: modality supplied but the sequence has " + std::to_string(mod_used) + " of " +
                                std::to_string(mod_rows) + " <mod> placeholders");
  }
  std::vector<Tensor<Scalar>> pieces;
  Index base_at = 0, ext_at = 0, mod_at = 0;
  if (!base_ids.empty()) {
    pieces.push_back(gather_rows(embed_base_, base_ids));
  }
  ext_at = static_cast<Index>(base_ids.size());
  if (!ext_ids.empty()) pieces.push_back(gather_rows(embed_ext_, ext_ids));
  mod_at = ext_at + static_cast<Index>(ext_ids.size());
  if (mod_used > 0) pieces.push_back(*modality);
  Index nb = 0, ne = 0, nm = 0;
  for (const auto& [pos, kind] : slots) {
    order[pos] = kind == 0 ? base_at + nb++ : kind == 1 ? ext_at + ne++ : mod_at + nm++;
  }
  Tensor<Scalar> x = gather_rows(pieces.size() == 1 ? pieces.front() : concat_rows(pieces), order);
  x = add(x, slice_rows(pos_, 0, t));
  const AttentionMask mask = causal_mask(t);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const std::string prefix = "block" + std::to_string(l) + "/";
    const Tensor<Scalar> h = b.ln1(x);
    Tensor<Scalar> att = attention(linear(b.q, prefix + "q", h, mixture), linear(b.k, prefix + "k", h, mixture),
                                   linear(b.v, prefix + "v", h, mixture), mask, config_.heads, 1);
    x = add(x, linear(b.o, prefix + "o", att, mixture));
    const Tensor<Scalar> h2 = b.ln2(x);
    x = add(x, linear(b.down, prefix + "down", gelu(linear(b.up, prefix + "up", h2, mixture)), mixture));
  }
  return final_norm_(x);
}

template <typename Scalar>
Tensor<Scalar> ToyLm<Scalar>::head(const Tensor<Scalar>& hidden) const {
  Tensor<Scalar> base = matmul(hidden, head_base_);
  if (!vocab_.extended()) return base;
  return concat_cols<Scalar>({base, matmul(hidden, head_ext_)});
}

template <typename Scalar>
void ToyLm<Scalar>::set_base_trainable(bool trainable) {
  visit_base([&](const std::string&, Tensor<Scalar>& t) { t.set_requires_grad(trainable); });
}

template <typename Scalar>
std::vector<Tensor<Scalar>> ToyLm<Scalar>::base_parameters() {
  std::vector<Tensor<Scalar>> out;
  visit_base([&](const std::string&, Tensor<Scalar>& t) { out.push_back(t); });
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> ToyLm<Scalar>::extension_parameters() {
  if (!vocab_.extended()) return {};
  return {embed_ext_, head_ext_};
}

template <typename Scalar>
std::uint64_t ToyLm<Scalar>::base_hash() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  visit_base([&](const std::string& name, Tensor<Scalar>& t) {
    h = fnv1a(name, h);
    const auto& v = t.value();
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(Scalar)), h);
  });
  return h;
}

template <typename Scalar>
void ToyLm<Scalar>::visit_base(const ParamVisitor<Scalar>& fn) {
  fn("lm/embed/base", embed_base_);
  fn("lm/pos", pos_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto& b = blocks_[l];
    const std::string prefix = "lm/block" + std::to_string(l);
    b.ln1.visit(prefix + "/ln1", fn);
    b.ln2.visit(prefix + "/ln2", fn);
    for (int i = 0; i < 6; ++i) linear_of(b, i).visit(prefix + "/" + kLinearNames[i], fn);
  }
  final_norm_.visit("lm/final_norm", fn);
  fn("lm/head/base", head_base_);
}

template <typename Scalar>
void ToyLm<Scalar>::visit(const ParamVisitor<Scalar>& fn) {
  visit_base(fn);
  if (vocab_.extended()) {
    fn("lm/embed/ext", embed_ext_);
    fn("lm/head/ext", head_ext_);
  }
  if (has_bank()) bank_.visit(fn);
}

template <typename Scalar>
ToyLm<Scalar> ToyLm<Scalar>::clone() const {
  ToyLm out = *this;
  out.bank_ = ExpertBank<Scalar>();
  out.visit([](const std::string&, Tensor<Scalar>& t) { t = t.clone(); });
  if (has_bank()) out.bank_ = bank_.clone();
  return out;
}

template <typename Scalar>
ToyLm<Scalar> ToyLm<Scalar>::merged(const ExpertMixture<Scalar>& mixture) const {
  ToyLm out = clone();
  if (!has_bank()) return out;
  validate_mixture(mixture);
  NoGradGuard guard;
  for (std::size_t l = 0; l < out.blocks_.size(); ++l) {
    for (int i = 0; i < 6; ++i) {
      auto& lin = linear_of(out.blocks_[l], i);
      const auto& experts = bank_.layer("block" + std::to_string(l) + "/" + kLinearNames[i]).experts;
      Tensor<Scalar> w = mix_weights<Scalar>(lin.weight, std::span<const LoraExpert<Scalar>>(experts), mixture);
      lin.weight = Tensor<Scalar>(lin.weight.shape(), w.value(), false);
    }
  }
  out.bank_ = ExpertBank<Scalar>();
  return out;
}

template <typename Scalar>
void ToyLm<Scalar>::save(Checkpoint& ckpt) {
  visit([&](const std::string& name, Tensor<Scalar>& t) { ckpt.put(name, t); });
  auto& meta = ckpt.meta();
  meta["vocab"] = vocab_.manifest();
  meta["lm"] = {{"layers", config_.layers},   {"heads", config_.heads},   {"model_dim", config_.model_dim},
                {"mlp_dim", config_.mlp_dim}, {"context", config_.context}};
  if (has_bank()) meta["bank"] = {{"rank", bank_.rank()}, {"num_experts", bank_.num_experts()}};
}

template <typename Scalar>
void ToyLm<Scalar>::load(const Checkpoint& ckpt) {
  visit([&](const std::string& name, Tensor<Scalar>& t) {
    const bool grad = t.requires_grad();
    ckpt.restore(name, t);
    t.set_requires_grad(grad);
  });
}

template <typename Scalar>
ToyLm<Scalar> ToyLm<Scalar>::from_checkpoint(const Checkpoint& ckpt) {
  const auto& meta = ckpt.meta();
  if (!meta.contains("vocab") || !meta.contains("lm")) throw CheckpointError("checkpoint has no language model metadata");
  const Vocabulary full = Vocabulary::from_manifest(meta.at("vocab"));
  std::vector<std::string> text;
  for (Index i = 0; i < full.text_size(); ++i) text.push_back(full.symbol(i));
  LmConfig config;
  const auto& lm = meta.at("lm");
  config.layers = lm.at("layers").get<Index>();
  config.heads = lm.at("heads").get<Index>();
  config.model_dim = lm.at("model_dim").get<Index>();
  config.mlp_dim = lm.at("mlp_dim").get<Index>();
  config.context = lm.at("context").get<Index>();
  ToyLm model(Vocabulary::from_symbols(text), config, 0);
  if (full.extended()) model.extend(full.parts(), full.codebook_size(), 0);
  if (meta.contains("bank")) {
    model.attach_bank(init_bank<Scalar>(model.adapted_layers(), meta["bank"].at("rank").get<Index>(),
                                        meta["bank"].at("num_experts").get<Index>(), 0));
  }
  model.load(ckpt);
  return model;
}

template <typename Scalar>
Generation generate(const ToyLm<Scalar>& model, std::span<const Index> prefix, const ExpertMixture<Scalar>* mixture,
                    const Tensor<Scalar>* modality, const GenerateOptions& options) {
  if (options.mode == DecodeMode::top_k && options.top_k < 1) throw std::invalid_argument("generate: top_k must be >= 1");
  NoGradGuard guard;
  const Vocabulary& vocab = model.vocab();
  const Index eor = vocab.id(Vocabulary::kEor);
  if (options.grammar != ResponseGrammar::free && !vocab.extended()) {
    throw std::invalid_argument("generate: a motion or pose grammar needs an extended vocabulary");
  }
  const Index parts = vocab.extended() ? vocab.parts() : 0;
  const Index limit = std::min<Index>(options.max_len, model.config().context - static_cast<Index>(prefix.size()));
  // Token admissibility at response position `pos`.
  const auto allowed = [&](Index pos, Index v) {
    switch (options.grammar) {
      case ResponseGrammar::free:
        return true;
      case ResponseGrammar::motion: {
        const bool boundary = pos % parts == 0;
        if (v == eor) return boundary && pos > 0;
        // a slot is only started when it can be completed
        if (boundary && pos + parts > limit) return false;
        const auto code = vocab.motion_code(v);
        return code && code->part == pos % parts;
      }
      case ResponseGrammar::pose: {
        if (pos == parts) return v == eor;
        const auto code = vocab.pose_code(v);
        return code && code->part == pos;
      }
    }
    return false;
  };
  std::vector<Index> ids(prefix.begin(), prefix.end());
  Rng rng(options.seed);
  Generation out;
  const Scalar excluded = -std::numeric_limits<Scalar>::infinity();
  for (Index step = 0; step < options.max_len; ++step) {
    if (static_cast<Index>(ids.size()) >= model.config().context) break;
    const Tensor<Scalar> h = model.hidden(ids, mixture, modality);
    const Tensor<Scalar> logits = model.head(slice_rows(h, h.value().rows() - 1, 1));
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> row = logits.value().row(0);
    Index admissible = 0;
    for (Index v = 0; v < row.size(); ++v) {
      if (allowed(step, v)) {
        ++admissible;
      } else {
        row(v) = excluded;
      }
    }
    if (admissible == 0) break;
    Index pick = 0;
    if (options.mode == DecodeMode::greedy || options.top_k == 1) {
      for (Index v = 1; v < row.size(); ++v)
        if (row(v) > row(pick)) pick = v;
    } else {
      std::vector<Index> order(static_cast<std::size_t>(row.size()));
      std::iota(order.begin(), order.end(), Index(0));
      const auto k = static_cast<std::size_t>(std::min(options.top_k, admissible));
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](Index a, Index b) { return row(a) > row(b) || (row(a) == row(b) && a < b); });
      std::vector<double> w(k);
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) total += (w[i] = std::exp(double(row(order[i]) - row(order[0]))));
      double u = rng.uniform() * total;
      pick = order[0];
      for (std::size_t i = 0; i < k; ++i) {
        if ((u -= w[i]) < 0) {
          pick = order[i];
          break;
        }
      }
    }
    if (pick == eor) {
      out.stopped = true;
      break;
    }
    out.tokens.push_back(pick);
    ids.push_back(pick);
  }
  return out;
}

template class ToyLm<float>;
template class ToyLm<double>;
template Generation generate(const ToyLm<float>&, std::span<const Index>, const ExpertMixture<float>*,
                             const Tensor<float>*, const GenerateOptions&);
template Generation generate(const ToyLm<double>&, std::span<const Index>, const ExpertMixture<double>*,
                             const Tensor<double>*, const GenerateOptions&);

}  // namespace moelora
