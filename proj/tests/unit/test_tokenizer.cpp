// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/tokenizer/token_stream.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

using namespace moelora;
using Catch::Approx;

namespace {

TokenizerConfig small_config(Index stages) {
  TokenizerConfig c;
  c.model_dim = 16;
  c.heads = 2;
  c.layers = 1;
  c.mlp_dim = 32;
  c.code_dim = 8;
  c.codebook_size = 16;
  c.temporal_stages = stages;
  return c;
}

void randomize_codebooks(PartTokenizer<double>& tok, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& book : tok.codebooks()) {
    book.entries.mutable_value() = rng.normal_matrix<double>(book.size(), book.dim(), 1.0);
  }
}

Mat<double> random_pose(const SkeletonSpec& sk, Rng& rng) {
  return sk.rest + rng.normal_matrix<double>(sk.joints, 3, 0.05);
}

Index scan_argmin(const Mat<double>& entries, const Mat<double>& v) {
  Index best = 0;
  double best_d = (entries.row(0) - v).squaredNorm();
  for (Index k = 1; k < entries.rows(); ++k) {
    const double d = (entries.row(k) - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("toy skeleton: 17 joints in 5 parts covering every joint once", "[tokenizer]") {
  const auto sk = SkeletonSpec::toy17();
  CHECK_NOTHROW(sk.validate());
  CHECK(sk.joints == 17);
  CHECK(sk.parts() == 5);
  Index total = 0;
  for (Index p = 0; p < sk.parts(); ++p) total += static_cast<Index>(sk.joints_of(p).size());
  CHECK(total == 17);
  CHECK(sk.joints_of(0).size() == 5);
  CHECK(sk.mean_bone_length() > 0.1);
  CHECK(sk.mean_bone_length() < 0.5);
  CHECK(sk.parent[0] == -1);
  const auto whole = sk.whole_body();
  CHECK(whole.parts() == 1);
  CHECK(whole.joints_of(0).size() == 17);
  SkeletonSpec broken = sk;
  broken.part_of[3] = 9;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("part mask: tokens see only their own part", "[tokenizer]") {
  const auto sk = SkeletonSpec::toy17();
  const auto mask = build_part_mask(sk);
  REQUIRE(mask.rows() == sk.joints + sk.parts());
  for (Index p = 0; p < sk.parts(); ++p) {
    const Index row = sk.joints + p;
    for (Index j = 0; j < sk.joints; ++j) CHECK(mask(row, j) == (sk.part_of[j] == p));
    for (Index q = 0; q < sk.parts(); ++q) CHECK(mask(row, sk.joints + q) == (p == q));
  }
  for (Index i = 0; i < sk.joints; ++i)
    for (Index j = 0; j < sk.joints; ++j) CHECK(mask(i, j) == (sk.part_of[i] == sk.part_of[j]));
}

TEST_CASE("nearest entry equals an exhaustive scan; ties go to the lowest index", "[tokenizer][vq]") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat<double> entries = rng.normal_matrix<double>(64, 6, 1.0);
    const Mat<double> v = rng.normal_matrix<double>(1, 6, 1.0);
    double d = -1;
    CHECK(nearest_entry<double>(entries, v, &d) == scan_argmin(entries, v));
    CHECK(d == Approx((entries.row(scan_argmin(entries, v)) - v).squaredNorm()));
  }
  Mat<double> entries = Mat<double>::Constant(8, 3, 4.0);
  Mat<double> v(1, 3);
  v << 0.5, 0.25, -1.0;
  // duplicate and mirrored entries are exactly equidistant in binary
  entries.row(5) = v + Mat<double>::Constant(1, 3, 0.125);
  entries.row(2) = entries.row(5);
  entries.row(6) = v - Mat<double>::Constant(1, 3, 0.125);
  CHECK(nearest_entry<double>(entries, v) == 2);
}

TEST_CASE("quantize records usage and copies the entry", "[tokenizer][vq]") {
  PartCodebook<double> book(4, 2, true);
  book.entries.mutable_value() << 0, 0, 1, 0, 0, 1, 1, 1;
  const auto r = quantize(Tensor<double>::from_values({2}, {0.9, 0.2}), book);
  CHECK(r.index == 1);
  CHECK(r.z.value()(0, 0) == 1.0);
  CHECK(book.usage[1] == 1);
  book.end_batch();
  CHECK(book.idle[1] == 0);
  CHECK(book.idle[0] == 1);
}

TEST_CASE("dead entries are re-seeded from recent encoder outputs", "[tokenizer][vq]") {
  std::vector<PartCodebook<double>> books(1, PartCodebook<double>(3, 2, true));
  books[0].entries.mutable_value() << 0, 0, 5, 5, 9, 9;
  books[0].record(0);
  for (int i = 0; i < 4; ++i) books[0].end_batch();
  const std::vector<Mat<double>> recent = {Mat<double>::Constant(4, 2, 0.5)};
  Rng rng(2);
  // entry 0 was last used 3 batches ago, entries 1 and 2 never
  const auto report = codebook_health<double>(books, recent, 4, rng);
  CHECK(report.resets == 2);
  CHECK(books[0].entries.value().row(0).isZero());
  CHECK(books[0].entries.value().row(1) == recent[0].row(0));
  CHECK(books[0].entries.value().row(2) == recent[0].row(0));
  CHECK(report.perplexity[0] == Approx(1.0));
}

TEST_CASE("usage perplexity is exp entropy", "[tokenizer][vq]") {
  const std::vector<std::int64_t> uniform = {5, 5, 5, 5};
  CHECK(usage_perplexity(uniform) == Approx(4.0));
  const std::vector<std::int64_t> none = {0, 0};
  CHECK(usage_perplexity(none) == 0.0);
}

TEST_CASE("vq loss components", "[tokenizer][vq]") {
  const auto x = Tensor<double>::from_values({2}, {1, 2});
  const auto xh = Tensor<double>::from_values({2}, {1, 4});
  const std::vector<Tensor<double>> e = {Tensor<double>::from_values({1, 2}, {0, 0})};
  const std::vector<Tensor<double>> q = {Tensor<double>::from_values({1, 2}, {1, 1})};
  const auto l = vq_loss<double>(x, xh, e, q, 0.02);
  CHECK(l.rec.item() == Approx(2.0));
  CHECK(l.emb.item() == Approx(1.0));
  CHECK(l.com.item() == Approx(1.0));
  CHECK(l.total.item() == Approx(3.02));
}

TEST_CASE("pose tokenizer: one token per part and locality of the spatial encoder", "[tokenizer]") {
  const auto sk = SkeletonSpec::toy17();
  PartTokenizer<double> tok(sk, small_config(0), 3);
  randomize_codebooks(tok, 4);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose pose{random_pose(sk, rng)};
    const auto tokens = tok.tokenize_pose(pose);
    REQUIRE(tokens.size() == 5);
    for (Index p = 0; p < 5; ++p) CHECK(tokens[p].part == p);
    const Index part = trial % 5;
    Pose moved = pose;
    for (Index j : sk.joints_of(part)) moved.values.row(j) += rng.normal_matrix<double>(1, 3, 0.3);
    const auto x0 = Tensor<double>(Shape{sk.joints, 3}, tok.normalize(pose.values.reshaped<Eigen::RowMajor>(1, 51)));
    const auto x1 = Tensor<double>(Shape{sk.joints, 3}, tok.normalize(moved.values.reshaped<Eigen::RowMajor>(1, 51)));
    const auto z0 = tok.spatial_encode(x0, 1).value();
    const auto z1 = tok.spatial_encode(x1, 1).value();
    for (Index p = 0; p < 5; ++p) {
      if (p == part) continue;
      CHECK(z0.row(p) == z1.row(p));
    }
    CHECK(z0.row(part) != z1.row(part));
    const auto moved_tokens = tok.tokenize_pose(moved);
    for (Index p = 0; p < 5; ++p)
      if (p != part) CHECK(moved_tokens[p] == tokens[p]);
  }
}

TEST_CASE("motion tokenizer: slot layout, decode shapes and compression checks", "[tokenizer]") {
  const auto sk = SkeletonSpec::toy17();
  PartTokenizer<double> tok(sk, small_config(2), 6);
  randomize_codebooks(tok, 7);
  MotionSequence motion;
  Rng rng(8);
  motion.frames = rng.normal_matrix<double>(16, 51, 0.1);
  const auto tokens = tok.tokenize_motion(motion);
  REQUIRE(tokens.size() == 4 * 5);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    CHECK(tokens[i].part == static_cast<Index>(i % 5));
    CHECK(tokens[i].slot == static_cast<Index>(i / 5));
  }
  const auto decoded = tok.decode_motion(tokens);
  CHECK(decoded.frames.rows() == 16);
  CHECK(decoded.frames.cols() == 51);
  motion.frames = rng.normal_matrix<double>(10, 51, 0.1);
  CHECK_THROWS_AS(tok.tokenize_motion(motion), std::invalid_argument);
  auto bad = tokens;
  bad.pop_back();
  CHECK_THROWS(tok.decode_motion(bad));
  bad = tokens;
  bad[3].index = 99;
  CHECK_THROWS(tok.decode_motion(bad));
}

TEST_CASE("motion tokenizer locality across time", "[tokenizer]") {
  const auto sk = SkeletonSpec::toy17();
  PartTokenizer<double> tok(sk, small_config(2), 9);
  randomize_codebooks(tok, 10);
  Rng rng(11);
  MotionSequence motion;
  motion.frames = rng.normal_matrix<double>(8, 51, 0.1);
  const auto x0 = Tensor<double>(Shape{8 * 17, 3}, tok.normalize(motion.frames));
  const Index part = 3;
  MotionSequence moved = motion;
  for (Index j : sk.joints_of(part))
    moved.frames.block(0, j * 3, 8, 3) += rng.normal_matrix<double>(8, 3, 0.2);
  const auto x1 = Tensor<double>(Shape{8 * 17, 3}, tok.normalize(moved.frames));
  const auto z0 = tok.encode(x0, 1, 8).value();
  const auto z1 = tok.encode(x1, 1, 8).value();
  for (Index r = 0; r < z0.rows(); ++r) {
    if (r % 5 == part) {
      CHECK(z0.row(r) != z1.row(r));
    } else {
      CHECK(z0.row(r) == z1.row(r));
    }
  }
}

TEST_CASE("tokenizer checkpoint round trip", "[tokenizer]") {
  const auto sk = SkeletonSpec::toy17();
  PartTokenizer<float> tok(sk, [] {
    auto c = TokenizerConfig{};
    c.model_dim = 16;
    c.heads = 2;
    c.layers = 1;
    c.mlp_dim = 32;
    c.code_dim = 8;
    c.codebook_size = 16;
    c.temporal_stages = 0;
    return c;
  }(), 12);
  Rng rng(13);
  for (auto& book : tok.codebooks()) book.entries.mutable_value() = rng.normal_matrix<float>(16, 8, 1.0);
  Checkpoint ckpt;
  tok.save(ckpt);
  PartTokenizer<float> other(sk, tok.config(), 99);
  other.load(ckpt);
  const Pose pose{random_pose(sk, rng)};
  CHECK(other.tokenize_pose(pose) == tok.tokenize_pose(pose));
  CHECK(other.decode_pose(tok.tokenize_pose(pose)).values == tok.decode_pose(tok.tokenize_pose(pose)).values);
}

TEST_CASE("token stream round trip through JSON and disk", "[tokenizer]") {
  std::vector<PartToken> tokens;
  for (Index s = 0; s < 3; ++s)
    for (Index p = 0; p < 5; ++p) tokens.push_back({p, (s * 7 + p * 3) % 16, s});
  const auto stream = TokenStream::from_tokens(tokens, 5, 4, 16);
  CHECK(TokenStream::from_json(stream.to_json()).tokens() == tokens);
  const auto path = std::filesystem::temp_directory_path() / "moelora_tokens.json";
  stream.save(path);
  CHECK(TokenStream::load(path).tokens() == tokens);
  std::filesystem::remove(path);
  auto bad = tokens;
  bad[0].index = 16;
  CHECK_THROWS(TokenStream::from_tokens(bad, 5, 4, 16));
}
