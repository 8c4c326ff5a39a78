// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/tokenizer/part_tokenizer.hpp"

#include <stdexcept>

namespace moelora {

namespace {

// out row (g, i) of an interleaved [G*(J+N)] layout from [G*J] joint rows then [G*N] part rows
std::vector<Index> interleave_ids(Index groups, Index joints, Index parts) {
  std::vector<Index> ids;
  ids.reserve(static_cast<std::size_t>(groups * (joints + parts)));
  for (Index g = 0; g < groups; ++g) {
    for (Index j = 0; j < joints; ++j) ids.push_back(g * joints + j);
    for (Index p = 0; p < parts; ++p) ids.push_back(groups * joints + g * parts + p);
  }
  return ids;
}

std::vector<Index> rows_of(Index groups, Index stride, Index begin, Index count) {
  std::vector<Index> ids;
  ids.reserve(static_cast<std::size_t>(groups * count));
  for (Index g = 0; g < groups; ++g)
    for (Index i = 0; i < count; ++i) ids.push_back(g * stride + begin + i);
  return ids;
}

// tiles a [rows, d] table `groups` times
std::vector<Index> tile_ids(Index groups, Index rows) { return rows_of(groups, 0, 0, rows); }

// (b, t, n) rows -> (b, n, t) rows
std::vector<Index> to_part_major(Index batch, Index steps, Index parts) {
  std::vector<Index> ids(static_cast<std::size_t>(batch * steps * parts));
  for (Index b = 0; b < batch; ++b)
    for (Index n = 0; n < parts; ++n)
      for (Index t = 0; t < steps; ++t) ids[static_cast<std::size_t>((b * parts + n) * steps + t)] = (b * steps + t) * parts + n;
  return ids;
}

std::vector<Index> to_step_major(Index batch, Index steps, Index parts) {
  std::vector<Index> ids(static_cast<std::size_t>(batch * steps * parts));
  for (Index b = 0; b < batch; ++b)
    for (Index t = 0; t < steps; ++t)
      for (Index n = 0; n < parts; ++n) ids[static_cast<std::size_t>((b * steps + t) * parts + n)] = (b * parts + n) * steps + t;
  return ids;
}

}  // namespace

template <typename Scalar>
VqLoss<Scalar> vq_loss(const Tensor<Scalar>& x, const Tensor<Scalar>& x_hat,
                       std::span<const Tensor<Scalar>> encoded_parts, std::span<const Tensor<Scalar>> quantized_parts,
                       Scalar commitment) {
  if (encoded_parts.size() != quantized_parts.size() || encoded_parts.empty()) {
    throw ShapeError("vq_loss: encoded/quantized part lists differ or are empty");
  }
  VqLoss<Scalar> out;
  out.rec = mse(x, x_hat);
  for (std::size_t p = 0; p < encoded_parts.size(); ++p) {
    Tensor<Scalar> emb = mse(encoded_parts[p].detach(), quantized_parts[p]);
    Tensor<Scalar> com = mse(encoded_parts[p], quantized_parts[p].detach());
    out.emb = p == 0 ? emb : add(out.emb, emb);
    out.com = p == 0 ? com : add(out.com, com);
  }
  out.total = add(add(out.rec, out.emb), scale(out.com, commitment));
  return out;
}

template <typename Scalar>
ResidualConvBlock<Scalar> ResidualConvBlock<Scalar>::init(Index channels, Rng& rng) {
  ResidualConvBlock b;
  b.conv1 = Conv1d<Scalar>::init(channels, channels, 3, 1, 1, rng);
  b.conv2 = Conv1d<Scalar>::init(channels, channels, 1, 1, 0, rng, 0.5);
  return b;
}

template <typename Scalar>
Tensor<Scalar> ResidualConvBlock<Scalar>::operator()(const Tensor<Scalar>& x, Index batch) const {
  return add(x, conv2(relu(conv1(relu(x), batch)), batch));
}

template <typename Scalar>
void ResidualConvBlock<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& fn) {
  conv1.visit(prefix + "/conv1", fn);
  conv2.visit(prefix + "/conv2", fn);
}

template <typename Scalar>
TemporalCompressor<Scalar> TemporalCompressor<Scalar>::init(Index channels, Index stages, Rng& rng) {
  TemporalCompressor t;
  for (Index s = 0; s < stages; ++s) {
    t.down.push_back(Conv1d<Scalar>::init(channels, channels, 3, 2, 1, rng));
    t.blocks.push_back(ResidualConvBlock<Scalar>::init(channels, rng));
  }
  t.out = Linear<Scalar>::init(channels, channels, rng);
  return t;
}

template <typename Scalar>
Tensor<Scalar> TemporalCompressor<Scalar>::operator()(const Tensor<Scalar>& x, Index batch, Index frames) const {
  if (frames % ratio() != 0) {
    throw std::invalid_argument("temporal_compress: " + std::to_string(frames) +
                                " frames is not a multiple of the compression ratio " + std::to_string(ratio()));
  }
  Tensor<Scalar> h = x;
  for (std::size_t s = 0; s < down.size(); ++s) h = blocks[s](relu(down[s](h, batch)), batch);
  return out(h);
}

template <typename Scalar>
void TemporalCompressor<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& fn) {
  for (std::size_t s = 0; s < down.size(); ++s) {
    down[s].visit(prefix + "/down" + std::to_string(s), fn);
    blocks[s].visit(prefix + "/res" + std::to_string(s), fn);
  }
  out.visit(prefix + "/out", fn);
}

template <typename Scalar>
TemporalExpander<Scalar> TemporalExpander<Scalar>::init(Index channels, Index stages, Rng& rng) {
  TemporalExpander t;
  t.in = Linear<Scalar>::init(channels, channels, rng);
  for (Index s = 0; s < stages; ++s) {
    t.blocks.push_back(ResidualConvBlock<Scalar>::init(channels, rng));
    t.up.push_back(Conv1d<Scalar>::init(channels, channels, 3, 1, 1, rng));
  }
  return t;
}

template <typename Scalar>
Tensor<Scalar> TemporalExpander<Scalar>::operator()(const Tensor<Scalar>& x, Index batch, Index /*slots*/) const {
  Tensor<Scalar> h = in(x);
  for (std::size_t s = 0; s < up.size(); ++s) h = relu(up[s](upsample_nearest(blocks[s](h, batch), batch, 2), batch));
  return h;
}

template <typename Scalar>
void TemporalExpander<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& fn) {
  in.visit(prefix + "/in", fn);
  for (std::size_t s = 0; s < up.size(); ++s) {
    blocks[s].visit(prefix + "/res" + std::to_string(s), fn);
    up[s].visit(prefix + "/up" + std::to_string(s), fn);
  }
}

template <typename Scalar>
PartTokenizer<Scalar>::PartTokenizer(SkeletonSpec skeleton, TokenizerConfig config, std::uint64_t seed)
    : skeleton_(std::move(skeleton)), config_(config) {
  skeleton_.validate();
  if (config_.code_dim < 1 || config_.codebook_size < 1 || config_.model_dim % config_.heads != 0) {
    throw std::invalid_argument("tokenizer: invalid dimensions");
  }
  mask_ = build_part_mask(skeleton_);
  const Index d = config_.model_dim;
  const Index s = config_.code_dim;
  const Index j = skeleton_.joints;
  const Index n = parts();
  Rng root(seed);
  Rng rng = root.derive("tok/enc");
  joint_in_ = Linear<Scalar>::init(skeleton_.channels, d, rng);
  joint_pos_ = Tensor<Scalar>({j, d}, rng.normal_matrix<Scalar>(j, d, 0.1), true);
  part_tokens_ = Tensor<Scalar>({n, d}, rng.normal_matrix<Scalar>(n, d, 0.1), true);
  for (Index l = 0; l < config_.layers; ++l) enc_blocks_.push_back(TransformerBlock<Scalar>::init(d, config_.mlp_dim, rng));
  enc_norm_ = LayerNorm<Scalar>::init(d);
  enc_out_ = Linear<Scalar>::init(d, s, rng);
  Rng trng = root.derive("tok/temporal");
  compressor_ = TemporalCompressor<Scalar>::init(s, config_.temporal_stages, trng);
  expander_ = TemporalExpander<Scalar>::init(s, config_.temporal_stages, trng);
  Rng drng = root.derive("tok/dec");
  dec_in_ = Linear<Scalar>::init(s, d, drng);
  joint_queries_ = Tensor<Scalar>({j, d}, drng.normal_matrix<Scalar>(j, d, 0.1), true);
  for (Index l = 0; l < config_.layers; ++l) dec_blocks_.push_back(TransformerBlock<Scalar>::init(d, config_.mlp_dim, drng));
  dec_norm_ = LayerNorm<Scalar>::init(d);
  dec_out_ = Linear<Scalar>::init(d, skeleton_.channels, drng);
  for (Index p = 0; p < n; ++p) {
    codebooks_.emplace_back(config_.codebook_size, s, !config_.ema);
    if (config_.ema) {
      codebooks_.back().ema_count = Vec<Scalar>::Zero(config_.codebook_size);
      codebooks_.back().ema_sum = Mat<Scalar>::Zero(config_.codebook_size, s);
    }
  }
  recent_.resize(static_cast<std::size_t>(n));
}

template <typename Scalar>
Mat<Scalar> PartTokenizer<Scalar>::normalize(const Mat<double>& frames) const {
  const Index jc = skeleton_.joints * skeleton_.channels;
  if (frames.cols() != jc) {
    throw ShapeError("tokenizer: frame width " + std::to_string(frames.cols()) + " != " + std::to_string(jc));
  }
  if (!frames.allFinite()) throw NumericError("tokenizer: non-finite input");
  Mat<double> scaled = frames / skeleton_.height();
  Mat<double> rows = scaled.template reshaped<Eigen::RowMajor>(frames.rows() * skeleton_.joints, skeleton_.channels);
  return rows.template cast<Scalar>();
}

template <typename Scalar>
Mat<double> PartTokenizer<Scalar>::denormalize(const Mat<Scalar>& rows, Index frames) const {
  Mat<double> out = rows.template cast<double>().template reshaped<Eigen::RowMajor>(
      frames, skeleton_.joints * skeleton_.channels);
  return out * skeleton_.height();
}

template <typename Scalar>
Tensor<Scalar> PartTokenizer<Scalar>::spatial_encode(const Tensor<Scalar>& x, Index frames) const {
  const Index j = skeleton_.joints;
  const Index n = parts();
  if (x.rank() != 2 || x.dim(1) != skeleton_.channels || x.dim(0) != frames * j) {
    throw ShapeError("spatial_encode: expected [" + std::to_string(frames * j) + "x" +
                     std::to_string(skeleton_.channels) + "], got " + to_string(x.shape()));
  }
  check_finite<Scalar>(x.value(), "spatial_encode input");
  const auto jt = tile_ids(frames, j);
  const auto pt = tile_ids(frames, n);
  Tensor<Scalar> joints = add(joint_in_(x), gather_rows(joint_pos_, jt));
  Tensor<Scalar> tokens = gather_rows(part_tokens_, pt);
  const auto order = interleave_ids(frames, j, n);
  Tensor<Scalar> h = gather_rows(concat_rows<Scalar>({joints, tokens}), order);
  for (const auto& block : enc_blocks_) h = block(h, mask_, config_.heads, frames);
  Tensor<Scalar> part_rows = gather_rows(h, rows_of(frames, j + n, j, n));
  return reshape(enc_out_(enc_norm_(part_rows)), {frames, n, config_.code_dim});
}

template <typename Scalar>
Tensor<Scalar> PartTokenizer<Scalar>::temporal_compress(const Tensor<Scalar>& latents, Index batch,
                                                        Index frames) const {
  const Index n = parts();
  if (frames % compression() != 0) {
    throw std::invalid_argument("temporal_compress: " + std::to_string(frames) +
                                " frames is not a multiple of l=" + std::to_string(compression()));
  }
  if (config_.temporal_stages == 0) return reshape(latents, {batch * frames * n, config_.code_dim});
  Tensor<Scalar> flat = reshape(latents, {batch * frames * n, config_.code_dim});
  Tensor<Scalar> seqs = gather_rows(flat, to_part_major(batch, frames, n));
  Tensor<Scalar> z = compressor_(seqs, batch * n, frames);
  return gather_rows(z, to_step_major(batch, frames / compression(), n));
}

template <typename Scalar>
Tensor<Scalar> PartTokenizer<Scalar>::encode(const Tensor<Scalar>& x, Index batch, Index frames) const {
  return temporal_compress(spatial_encode(x, batch * frames), batch, frames);
}

template <typename Scalar>
Tensor<Scalar> PartTokenizer<Scalar>::decode_latents(const Tensor<Scalar>& z, Index batch, Index slots) const {
  const Index j = skeleton_.joints;
  const Index n = parts();
  const Index frames = slots * compression();
  Tensor<Scalar> latents = z;
  if (config_.temporal_stages > 0) {
    Tensor<Scalar> seqs = gather_rows(z, to_part_major(batch, slots, n));
    latents = gather_rows(expander_(seqs, batch * n, slots), to_step_major(batch, frames, n));
  }
  const Index groups = batch * frames;
  Tensor<Scalar> tokens = dec_in_(latents);
  Tensor<Scalar> queries = gather_rows(joint_queries_, tile_ids(groups, j));
  Tensor<Scalar> h = gather_rows(concat_rows<Scalar>({queries, tokens}), interleave_ids(groups, j, n));
  for (const auto& block : dec_blocks_) h = block(h, mask_, config_.heads, groups);
  Tensor<Scalar> joint_rows = gather_rows(h, rows_of(groups, j + n, 0, j));
  return dec_out_(dec_norm_(joint_rows));
}

template <typename Scalar>
typename PartTokenizer<Scalar>::Quantized PartTokenizer<Scalar>::quantize_latents(const Tensor<Scalar>& latents,
                                                                                 bool record) {
  Quantized q = static_cast<const PartTokenizer&>(*this).quantize_latents(latents);
  if (record) {
    const Index n = parts();
    for (std::size_t r = 0; r < q.indices.size(); ++r)
      codebooks_[r % static_cast<std::size_t>(n)].record(q.indices[r]);
    for (Index p = 0; p < n; ++p) recent_[static_cast<std::size_t>(p)] = q.encoded_parts[static_cast<std::size_t>(p)].value();
  }
  return q;
}

template <typename Scalar>
typename PartTokenizer<Scalar>::Quantized PartTokenizer<Scalar>::quantize_latents(const Tensor<Scalar>& latents) const {
  const Index n = parts();
  const Index rows = latents.value().rows();
  if (latents.value().cols() != config_.code_dim || rows % n != 0) {
    throw ShapeError("quantize_latents: bad latent shape " + to_string(latents.shape()));
  }
  const Index per_part = rows / n;
  Quantized q;
  q.indices.assign(static_cast<std::size_t>(rows), 0);
  std::vector<Tensor<Scalar>> straight_parts;
  for (Index p = 0; p < n; ++p) {
    const auto ids = rows_of(per_part, n, p, 1);
    Tensor<Scalar> enc = gather_rows(latents, ids);
    const auto& book = codebooks_[static_cast<std::size_t>(p)];
    std::vector<Index> picks(static_cast<std::size_t>(per_part));
    for (Index r = 0; r < per_part; ++r) {
      picks[static_cast<std::size_t>(r)] = nearest_entry<Scalar>(book.entries.value(), enc.value().row(r));
      q.indices[static_cast<std::size_t>(r * n + p)] = picks[static_cast<std::size_t>(r)];
    }
    Tensor<Scalar> quant = gather_rows(book.entries, picks);
    straight_parts.push_back(straight_through(enc, quant));
    q.encoded_parts.push_back(enc);
    q.quantized_parts.push_back(quant);
  }
  // part-major (p, r) -> row-major (r, p)
  std::vector<Index> back(static_cast<std::size_t>(rows));
  for (Index r = 0; r < per_part; ++r)
    for (Index p = 0; p < n; ++p) back[static_cast<std::size_t>(r * n + p)] = p * per_part + r;
  q.straight = gather_rows(concat_rows(straight_parts), back);
  return q;
}

template <typename Scalar>
typename PartTokenizer<Scalar>::Step PartTokenizer<Scalar>::forward_train(const Mat<Scalar>& x, Index batch,
                                                                          Index frames) {
  Tensor<Scalar> input({x.rows(), x.cols()}, x);
  Tensor<Scalar> latents = encode(input, batch, frames);
  if (!codebooks_initialized()) {
    Rng rng(mix64(static_cast<std::uint64_t>(latents.value().size())));
    init_codebooks(latents, rng);
  }
  Step step;
  step.quantized = quantize_latents(latents, true);
  step.reconstruction = decode_latents(step.quantized.straight, batch, frames / compression());
  step.loss = vq_loss<Scalar>(input, step.reconstruction, step.quantized.encoded_parts,
                              step.quantized.quantized_parts, static_cast<Scalar>(config_.commitment));
  return step;
}

template <typename Scalar>
void PartTokenizer<Scalar>::end_batch(const Quantized& q) {
  const Index n = parts();
  if (config_.ema) {
    const Scalar decay = static_cast<Scalar>(config_.ema_decay);
    for (Index p = 0; p < n; ++p) {
      auto& book = codebooks_[static_cast<std::size_t>(p)];
      Vec<Scalar> counts = Vec<Scalar>::Zero(book.size());
      Mat<Scalar> sums = Mat<Scalar>::Zero(book.size(), book.dim());
      const Mat<Scalar>& enc = q.encoded_parts[static_cast<std::size_t>(p)].value();
      for (Index r = 0; r < enc.rows(); ++r) {
        const Index k = q.indices[static_cast<std::size_t>(r * n + p)];
        counts(k) += 1;
        sums.row(k) += enc.row(r);
      }
      book.ema_count = decay * book.ema_count + (1 - decay) * counts;
      book.ema_sum = decay * book.ema_sum + (1 - decay) * sums;
      auto& entries = book.entries.mutable_value();
      for (Index k = 0; k < book.size(); ++k)
        if (book.ema_count(k) > Scalar(1e-5)) entries.row(k) = book.ema_sum.row(k) / book.ema_count(k);
    }
  }
  for (auto& book : codebooks_) book.end_batch();
}

template <typename Scalar>
CodebookReport PartTokenizer<Scalar>::codebook_health(Rng& rng) {
  return moelora::codebook_health<Scalar>(std::span<PartCodebook<Scalar>>(codebooks_),
                                          std::span<const Mat<Scalar>>(recent_), config_.dead_window, rng);
}

template <typename Scalar>
void PartTokenizer<Scalar>::init_codebooks(const Tensor<Scalar>& latents, Rng& rng) {
  const Index n = parts();
  const Mat<Scalar>& z = latents.value();
  const Index per_part = z.rows() / n;
  for (Index p = 0; p < n; ++p) {
    auto& book = codebooks_[static_cast<std::size_t>(p)];
    Mat<Scalar> pool(per_part, z.cols());
    for (Index r = 0; r < per_part; ++r) pool.row(r) = z.row(r * n + p);
    const double spread = std::max(1e-3, static_cast<double>(std::sqrt(
                                             (pool.rowwise() - pool.colwise().mean()).squaredNorm() /
                                             std::max<Index>(1, pool.size()))));
    Mat<Scalar>& entries = book.entries.mutable_value();
    for (Index k = 0; k < book.size(); ++k) {
      entries.row(k) = pool.row(rng.below(per_part)) + rng.normal_matrix<Scalar>(1, z.cols(), 0.1 * spread);
    }
    if (config_.ema) {
      book.ema_count = Vec<Scalar>::Ones(book.size());
      book.ema_sum = entries;
    }
    recent_[static_cast<std::size_t>(p)] = pool;
  }
}

template <typename Scalar>
bool PartTokenizer<Scalar>::codebooks_initialized() const {
  for (const auto& book : codebooks_)
    if (!book.initialized()) return false;
  return true;
}

template <typename Scalar>
std::vector<Index> PartTokenizer<Scalar>::encode_indices(const Mat<Scalar>& x, Index batch, Index frames) const {
  if (!codebooks_initialized()) throw std::logic_error("tokenizer: codebooks are untrained (all zero)");
  NoGradGuard guard;
  Tensor<Scalar> input({x.rows(), x.cols()}, x);
  return quantize_latents(encode(input, batch, frames)).indices;
}

template <typename Scalar>
Mat<Scalar> PartTokenizer<Scalar>::decode_indices(std::span<const Index> indices, Index batch, Index slots) const {
  const Index n = parts();
  if (static_cast<Index>(indices.size()) != batch * slots * n) {
    throw std::invalid_argument("decode: expected " + std::to_string(batch * slots * n) + " tokens, got " +
                                std::to_string(indices.size()));
  }
  NoGradGuard guard;
  Mat<Scalar> z(static_cast<Index>(indices.size()), config_.code_dim);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& book = codebooks_[r % static_cast<std::size_t>(n)];
    if (indices[r] < 0 || indices[r] >= book.size()) throw std::out_of_range("decode: token index out of range");
    z.row(static_cast<Index>(r)) = book.entries.value().row(indices[r]);
  }
  const Shape shape{z.rows(), z.cols()};
  Tensor<Scalar> latents(shape, std::move(z));
  return decode_latents(latents, batch, slots).value();
}

template <typename Scalar>
std::vector<PartToken> PartTokenizer<Scalar>::tokenize_pose(const Pose& pose) const {
  if (config_.temporal_stages != 0) throw std::logic_error("tokenize_pose: tokenizer has temporal stages");
  const Mat<double> flat = pose.values.template reshaped<Eigen::RowMajor>(1, pose.values.size());
  const auto ids = encode_indices(normalize(flat), 1, 1);
  std::vector<PartToken> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({static_cast<Index>(i), ids[i], 0});
  return out;
}

template <typename Scalar>
std::vector<PartToken> PartTokenizer<Scalar>::tokenize_motion(const MotionSequence& motion) const {
  const Index frames = motion.length();
  if (frames < 1 || frames % compression() != 0) {
    throw std::invalid_argument("tokenize_motion: " + std::to_string(frames) + " frames is not a multiple of l=" +
                                std::to_string(compression()));
  }
  const auto ids = encode_indices(normalize(motion.frames), 1, frames);
  const Index n = parts();
  std::vector<PartToken> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.push_back({static_cast<Index>(i) % n, ids[i], static_cast<Index>(i) / n});
  return out;
}

template <typename Scalar>
void PartTokenizer<Scalar>::check_tokens(std::span<const PartToken> tokens, Index slots) const {
  const Index n = parts();
  if (slots < 1 || static_cast<Index>(tokens.size()) != slots * n) {
    throw std::invalid_argument("decode: token count " + std::to_string(tokens.size()) + " is not a positive multiple of " +
                                std::to_string(n));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].part != static_cast<Index>(i) % n || tokens[i].slot != static_cast<Index>(i) / n) {
      throw std::invalid_argument("decode: token " + std::to_string(i) + " is out of slot-major part order");
    }
  }
}

template <typename Scalar>
Pose PartTokenizer<Scalar>::decode_pose(std::span<const PartToken> tokens) const {
  check_tokens(tokens, static_cast<Index>(tokens.size()) / parts());
  if (static_cast<Index>(tokens.size()) != parts()) throw std::invalid_argument("decode_pose: expected one slot");
  std::vector<Index> ids;
  for (const auto& t : tokens) ids.push_back(t.index);
  const Mat<double> flat = denormalize(decode_indices(ids, 1, 1), 1);
  return Pose{flat.template reshaped<Eigen::RowMajor>(skeleton_.joints, skeleton_.channels)};
}

template <typename Scalar>
MotionSequence PartTokenizer<Scalar>::decode_motion(std::span<const PartToken> tokens, double fps) const {
  const Index slots = static_cast<Index>(tokens.size()) / parts();
  check_tokens(tokens, slots);
  std::vector<Index> ids;
  for (const auto& t : tokens) ids.push_back(t.index);
  return MotionSequence{denormalize(decode_indices(ids, 1, slots), slots * compression()), fps};
}

template <typename Scalar>
void PartTokenizer<Scalar>::visit(const ParamVisitor<Scalar>& fn) {
  joint_in_.visit("tok/enc/joint_in", fn);
  fn("tok/enc/joint_pos", joint_pos_);
  fn("tok/enc/part_tokens", part_tokens_);
  for (std::size_t l = 0; l < enc_blocks_.size(); ++l) enc_blocks_[l].visit("tok/enc/block" + std::to_string(l), fn);
  enc_norm_.visit("tok/enc/norm", fn);
  enc_out_.visit("tok/enc/out", fn);
  compressor_.visit("tok/temporal/enc", fn);
  expander_.visit("tok/temporal/dec", fn);
  dec_in_.visit("tok/dec/in", fn);
  fn("tok/dec/joint_queries", joint_queries_);
  for (std::size_t l = 0; l < dec_blocks_.size(); ++l) dec_blocks_[l].visit("tok/dec/block" + std::to_string(l), fn);
  dec_norm_.visit("tok/dec/norm", fn);
  dec_out_.visit("tok/dec/out", fn);
  for (std::size_t p = 0; p < codebooks_.size(); ++p) fn("tok/part" + std::to_string(p) + "/codebook", codebooks_[p].entries);
}

template <typename Scalar>
std::vector<Tensor<Scalar>> PartTokenizer<Scalar>::parameters() {
  std::vector<Tensor<Scalar>> out;
  visit([&](const std::string&, Tensor<Scalar>& t) {
    if (t.requires_grad()) out.push_back(t);
  });
  return out;
}

template <typename Scalar>
void PartTokenizer<Scalar>::save(Checkpoint& ckpt) {
  visit([&](const std::string& name, Tensor<Scalar>& t) { ckpt.put(name, t); });
  for (std::size_t p = 0; p < codebooks_.size(); ++p) {
    const auto& usage = codebooks_[p].usage;
    Mat<double> u(1, static_cast<Index>(usage.size()));
    for (std::size_t k = 0; k < usage.size(); ++k) u(0, static_cast<Index>(k)) = static_cast<double>(usage[k]);
    ckpt.put("tok/part" + std::to_string(p) + "/usage", Tensor<double>({u.cols()}, u));
  }
}

template <typename Scalar>
void PartTokenizer<Scalar>::load(const Checkpoint& ckpt) {
  visit([&](const std::string& name, Tensor<Scalar>& t) { ckpt.restore(name, t); });
  for (std::size_t p = 0; p < codebooks_.size(); ++p) {
    const std::string name = "tok/part" + std::to_string(p) + "/usage";
    if (!ckpt.contains(name)) continue;
    const Tensor<double> u = ckpt.get<double>(name);
    for (Index k = 0; k < u.numel(); ++k) codebooks_[p].usage[static_cast<std::size_t>(k)] = static_cast<std::int64_t>(u.value()(0, k));
  }
}

#define MOELORA_INSTANTIATE_TOKENIZER(S)                                                                      \
  template VqLoss<S> vq_loss(const Tensor<S>&, const Tensor<S>&, std::span<const Tensor<S>>,                  \
                             std::span<const Tensor<S>>, S);                                                  \
  template struct ResidualConvBlock<S>;                                                                       \
  template struct TemporalCompressor<S>;                                                                      \
  template struct TemporalExpander<S>;                                                                        \
  template class PartTokenizer<S>;

MOELORA_INSTANTIATE_TOKENIZER(float)
MOELORA_INSTANTIATE_TOKENIZER(double)

}  // namespace moelora
