// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "grad_suite.hpp"

#include "moelora/adapter/gating.hpp"
#include "moelora/core/nn.hpp"
#include "moelora/lm/toy_lm.hpp"
#include "moelora/tokenizer/codebook.hpp"
#include "moelora/tokenizer/part_tokenizer.hpp"

namespace moelora::testing {

namespace {

using T = Tensor<double>;

T param(Rng& rng, Shape shape, double stddev = 1.0) {
  const auto [rows, cols] = storage_dims(shape);
  return T(std::move(shape), rng.normal_matrix<double>(rows, cols, stddev), true);
}

/// Values bounded away from zero so kinks (relu) and floors stay put under eps.
T param_away_from_zero(Rng& rng, Shape shape, double margin = 0.05) {
  T t = param(rng, std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) {
    double& v = t.mutable_value().data()[i];
    if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
  }
  return t;
}

/// sum(out * R) with a fixed random R, so every output element gets a
/// distinct upstream gradient.
T project(const T& out, std::uint64_t seed) {
  Rng rng(seed);
  const T weights(out.shape(), rng.normal_matrix<double>(out.value().rows(), out.value().cols(), 1.0));
  return sum(mul(out, weights));
}

GradCheck unary(std::uint64_t seed, Shape shape, const std::function<T(const T&)>& op, bool away = false) {
  Rng rng(seed);
  T x = away ? param_away_from_zero(rng, shape) : param(rng, shape);
  return check_gradients([&] { return project(op(x), seed + 1); }, {x});
}

GradCheck binary(std::uint64_t seed, Shape sa, Shape sb, const std::function<T(const T&, const T&)>& op) {
  Rng rng(seed);
  T a = param(rng, sa);
  T b = param(rng, sb);
  return check_gradients([&] { return project(op(a, b), seed + 1); }, {a, b});
}

std::vector<GradCase> build() {
  std::vector<GradCase> c;
  c.push_back({"matmul", [](std::uint64_t s) { return binary(s, {3, 4}, {4, 5}, matmul<double>); }});
  c.push_back({"matmul_batched", [](std::uint64_t s) { return binary(s, {2, 3, 4}, {4, 2}, matmul<double>); }});
  c.push_back({"add", [](std::uint64_t s) { return binary(s, {3, 4}, {3, 4}, add<double>); }});
  c.push_back({"sub", [](std::uint64_t s) { return binary(s, {3, 4}, {3, 4}, sub<double>); }});
  c.push_back({"mul", [](std::uint64_t s) { return binary(s, {3, 4}, {3, 4}, mul<double>); }});
  c.push_back({"scale", [](std::uint64_t s) { return unary(s, {3, 4}, [](const T& x) { return scale(x, 0.37); }); }});
  c.push_back({"mul_scalar", [](std::uint64_t s) { return binary(s, {3, 4}, {1}, mul_scalar<double>); }});
  c.push_back({"add_bias", [](std::uint64_t s) { return binary(s, {2, 3, 4}, {4}, add_bias<double>); }});
  c.push_back({"element", [](std::uint64_t s) {
                 return unary(s, {3, 4}, [](const T& x) { return scale(element(x, 7), 2.0); });
               }});
  c.push_back({"sum", [](std::uint64_t s) { return unary(s, {3, 4}, [](const T& x) { return mul(sum(x), sum(x)); }); }});
  c.push_back({"mean", [](std::uint64_t s) {
                 return unary(s, {3, 4}, [](const T& x) { return mul(mean(x), mean(x)); });
               }});
  c.push_back({"mean_rows", [](std::uint64_t s) { return unary(s, {5, 3}, mean_rows<double>); }});
  c.push_back({"mse", [](std::uint64_t s) {
                 Rng rng(s);
                 T a = param(rng, {4, 3});
                 T b = param(rng, {4, 3});
                 return check_gradients([&] { return mse(a, b); }, {a, b});
               }});
  c.push_back({"relu", [](std::uint64_t s) { return unary(s, {4, 5}, relu<double>, true); }});
  c.push_back({"gelu", [](std::uint64_t s) { return unary(s, {4, 5}, gelu<double>); }});
  c.push_back({"log_clamped", [](std::uint64_t s) {
                 return unary(s, {3, 4}, [](const T& x) { return log_clamped(mul(x, x), 1e-12); }, true);
               }});
  c.push_back({"softmax", [](std::uint64_t s) { return unary(s, {3, 6}, softmax<double>); }});
  c.push_back({"layer_norm", [](std::uint64_t s) {
                 Rng rng(s);
                 T x = param(rng, {3, 6});
                 T g = param(rng, {6});
                 T b = param(rng, {6});
                 return check_gradients([&] { return project(layer_norm(x, g, b), s + 1); }, {x, g, b});
               }});
  c.push_back({"gather_rows", [](std::uint64_t s) {
                 const std::vector<Index> ids = {2, 0, 2, 4, 1, 2};
                 return unary(s, {5, 3}, [&](const T& x) { return gather_rows(x, std::span<const Index>(ids)); });
               }});
  c.push_back({"concat_rows", [](std::uint64_t s) {
                 return binary(s, {2, 3}, {4, 3}, [](const T& a, const T& b) { return concat_rows<double>({a, b, a}); });
               }});
  c.push_back({"slice_rows", [](std::uint64_t s) {
                 return unary(s, {6, 3}, [](const T& x) { return slice_rows(x, 1, 3); });
               }});
  c.push_back({"concat_cols", [](std::uint64_t s) {
                 return binary(s, {3, 2}, {3, 4}, [](const T& a, const T& b) { return concat_cols<double>({b, a}); });
               }});
  c.push_back({"slice_cols", [](std::uint64_t s) {
                 return unary(s, {3, 6}, [](const T& x) { return slice_cols(x, 2, 3); });
               }});
  c.push_back({"transpose", [](std::uint64_t s) { return unary(s, {3, 5}, transpose<double>); }});
  c.push_back({"reshape", [](std::uint64_t s) {
                 return unary(s, {3, 4}, [](const T& x) { return reshape(x, Shape{2, 6}); });
               }});
  c.push_back({"attention", [](std::uint64_t s) {
                 Rng rng(s);
                 T q = param(rng, {2 * 3, 4});
                 T k = param(rng, {2 * 4, 4});
                 T v = param(rng, {2 * 4, 4});
                 AttentionMask mask(3, 4);
                 mask << true, false, true, false, true, true, false, false, true, true, true, true;
                 return check_gradients([&] { return project(attention(q, k, v, mask, 2, 2), s + 1); }, {q, k, v});
               }});
  c.push_back({"attention_causal", [](std::uint64_t s) {
                 Rng rng(s);
                 T q = param(rng, {5, 6});
                 T k = param(rng, {5, 6});
                 T v = param(rng, {5, 6});
                 const AttentionMask mask = causal_mask(5);
                 return check_gradients([&] { return project(attention(q, k, v, mask, 3), s + 1); }, {q, k, v});
               }});
  c.push_back({"conv1d", [](std::uint64_t s) {
                 Rng rng(s);
                 T x = param(rng, {2 * 6, 3});
                 T w = param(rng, {3 * 3, 2});
                 T b = param(rng, {2});
                 const Conv1dSpec spec{2, 3, 2, 1};
                 return check_gradients([&] { return project(conv1d(x, w, b, spec), s + 1); }, {x, w, b});
               }});
  c.push_back({"upsample_nearest", [](std::uint64_t s) {
                 return unary(s, {2 * 3, 2}, [](const T& x) { return upsample_nearest(x, 2, 2); });
               }});
  c.push_back({"cross_entropy", [](std::uint64_t s) {
                 Rng rng(s);
                 T logits = param(rng, {4, 5});
                 const std::vector<Index> targets = {1, 4, 0, 2};
                 const std::vector<double> mask = {1, 0, 1, 1};
                 return check_gradients(
                     [&] {
                       return cross_entropy(logits, std::span<const Index>(targets), std::span<const double>(mask));
                     },
                     {logits});
               }});
  c.push_back({"straight_through", [](std::uint64_t s) {
                 // The forward value is the constant q and the backward is the
                 // identity, i.e. the derivative of x + (q - x0) with x0 frozen.
                 Rng rng(s);
                 T x = param(rng, {3, 4});
                 const T weights = param(rng, {3, 4});
                 const T q(Shape{3, 4}, rng.normal_matrix<double>(3, 4, 1.0));
                 const T offset(Shape{3, 4}, q.value() - x.value());
                 T x_ref = x.clone();
                 GradCheck ref = check_gradients([&] { return project(mul(add(x_ref, offset), weights), s + 1); }, {x_ref});
                 x.zero_grad();
                 project(mul(straight_through(x, q), weights), s + 1).backward();
                 ref.max_rel_error = std::max(ref.max_rel_error,
                                              (x.grad() - x_ref.grad()).norm() / std::max(x_ref.grad().norm(), 1e-12));
                 return ref;
               }});

  // Composite paths.
  c.push_back({"moe_linear_gated", [](std::uint64_t s) {
                 // feature -> gate -> alpha -> x W + sum_i alpha_i (x A_i) B_i, plus the gating loss
                 Rng rng(s);
                 const Index d_in = 6, d_out = 5, rank = 2, experts = 4;
                 T x = param(rng, {3, d_in});
                 T w = param(rng, {d_in, d_out});
                 std::vector<LoraExpert<double>> bank(experts);
                 std::vector<T> params = {x, w};
                 bank[0] = {T(Shape{d_in, rank}), T(Shape{rank, d_out}), false};
                 for (Index i = 1; i < experts; ++i) {
                   bank[i] = {param(rng, {d_in, rank}), param(rng, {rank, d_out}), true};
                   params.push_back(bank[i].a);
                   params.push_back(bank[i].b);
                 }
                 GatingNetwork<double> gate(4, 7, experts, s + 3);
                 // a fresh gate has a zero output layer; randomize it so alpha is non-uniform
                 gate.visit([&](const std::string&, T& t) {
                   t.mutable_value() = rng.normal_matrix<double>(t.value().rows(), t.value().cols(), 0.5);
                   t.set_requires_grad(true);
                   params.push_back(t);
                 });
                 T feature = param(rng, {4});
                 params.push_back(feature);
                 return check_gradients(
                     [&] {
                       const ExpertMixture<double> mix = gate.gate(feature);
                       const T y = moe_linear_forward(x, w, std::span<const LoraExpert<double>>(bank), mix);
                       return add(project(y, s + 1), gating_loss(mix, 1).value);
                     },
                     params);
               }});
  c.push_back({"toy_lm_with_bank", [](std::uint64_t s) {
                 // cross-entropy through a two-layer transformer with an expert bank
                 LmConfig cfg;
                 cfg.layers = 2;
                 cfg.heads = 2;
                 cfg.model_dim = 8;
                 cfg.mlp_dim = 12;
                 cfg.context = 8;
                 ToyLm<double> lm(Vocabulary::base(), cfg, s);
                 lm.extend(5, 2, s + 1);
                 lm.attach_bank(init_bank<double>(lm.adapted_layers(), 2, 3, s + 2));
                 Rng rng(s + 3);
                 std::vector<T> params;
                 lm.bank().visit([&](const std::string&, T& t) {
                   if (!t.requires_grad()) return;
                   t.mutable_value() = rng.normal_matrix<double>(t.value().rows(), t.value().cols(), 0.3);
                   params.push_back(t);
                 });
                 for (auto& t : lm.extension_parameters()) params.push_back(t);
                 T logits_alpha = param(rng, {3});
                 params.push_back(logits_alpha);
                 const std::vector<Index> ids = {1, 20, 21, lm.vocab().motion_id(2, 1), 22, lm.vocab().pose_id(4, 0)};
                 const std::vector<Index> targets = {20, 21, lm.vocab().motion_id(2, 1), 22, lm.vocab().pose_id(4, 0), 3};
                 const std::vector<double> mask(ids.size(), 1.0);
                 return check_gradients(
                     [&] {
                       const ExpertMixture<double> mix{softmax(logits_alpha)};
                       return cross_entropy(lm.forward(std::span<const Index>(ids), &mix),
                                            std::span<const Index>(targets), std::span<const double>(mask));
                     },
                     params);
               }});
  c.push_back({"vq_straight_through_path", [](std::uint64_t s) {
                 // encoder -> nearest entry -> straight-through -> decoder, with the
                 // codebook and commitment terms. Reference: the same loss with the
                 // quantization offset and the stop-gradient operands frozen at the
                 // base point, whose true derivative is the estimator's gradient.
                 Rng rng(s);
                 const Index rows = 6, in = 4, code = 3, entries = 5;
                 const T x(Shape{rows, in}, rng.normal_matrix<double>(rows, in, 1.0));
                 T enc = param(rng, {in, code}, 0.5);
                 T dec = param(rng, {code, in}, 0.5);
                 T book = param(rng, {entries, code}, 1.0);
                 const double commitment = 0.25;
                 Mat<double> e0, q0;
                 std::vector<Index> idx(rows);
                 {
                   NoGradGuard guard;
                   e0 = matmul(x, enc).value();
                   for (Index r = 0; r < rows; ++r) idx[r] = nearest_entry<double>(book.value(), e0.row(r));
                   q0 = gather_rows(book, std::span<const Index>(idx)).value();
                 }
                 const auto actual = [&] {
                   const T e = matmul(x, enc);
                   const T q = gather_rows(book, std::span<const Index>(idx));
                   const T z = straight_through(e, q);
                   const T x_hat = matmul(z, dec);
                   const std::vector<T> ep = {e};
                   const std::vector<T> qp = {q};
                   return vq_loss<double>(x, x_hat, ep, qp, commitment).total;
                 };
                 T enc_ref = enc.clone(), dec_ref = dec.clone(), book_ref = book.clone();
                 const auto surrogate = [&] {
                   const T e = matmul(x, enc_ref);
                   const T q = gather_rows(book_ref, std::span<const Index>(idx));
                   const T z = add(e, T(Shape{rows, code}, q0 - e0));
                   const T rec = mse(x, matmul(z, dec_ref));
                   const T emb = mse(T(Shape{rows, code}, e0), q);
                   const T com = mse(e, T(Shape{rows, code}, q0));
                   return add(add(rec, emb), scale(com, commitment));
                 };
                 GradCheck ref = check_gradients(surrogate, {enc_ref, dec_ref, book_ref});
                 for (T* t : {&enc, &dec, &book}) t->zero_grad();
                 actual().backward();
                 const T pairs[3][2] = {{enc, enc_ref}, {dec, dec_ref}, {book, book_ref}};
                 // check_gradients left the reference gradients from its analytic pass
                 for (const auto& p : pairs) {
                   const double rel = (p[0].grad() - p[1].grad()).norm() / std::max(p[1].grad().norm(), 1e-12);
                   ref.max_rel_error = std::max(ref.max_rel_error, rel);
                 }
                 return ref;
               }});
  return c;
}

}  // namespace

const std::vector<GradCase>& gradient_cases() {
  static const std::vector<GradCase> cases = build();
  return cases;
}

}  // namespace moelora::testing
