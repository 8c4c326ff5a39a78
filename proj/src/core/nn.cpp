// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/core/nn.hpp"

#include <cmath>

namespace moelora {

template <typename Scalar>
Linear<Scalar> Linear<Scalar>::init(Index in, Index out, Rng& rng, bool with_bias, double gain) {
  Linear l;
  l.weight = Tensor<Scalar>({in, out}, rng.normal_matrix<Scalar>(in, out, gain / std::sqrt(double(in))), true);
  if (with_bias) l.bias = Tensor<Scalar>({out}, true);
  return l;
}

template <typename Scalar>
Tensor<Scalar> Linear<Scalar>::operator()(const Tensor<Scalar>& x) const {
  Tensor<Scalar> y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

template <typename Scalar>
void Linear<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& fn) {
  fn(prefix + "/w", weight);
  if (bias.defined()) fn(prefix + "/b", bias);
}

template <typename Scalar>
Conv1d<Scalar> Conv1d<Scalar>::init(Index in, Index out, Index kernel, Index stride, Index padding, Rng& rng,
                                    double gain) {
  Conv1d c;
  const Index fan_in = kernel * in;
  c.weight = Tensor<Scalar>({fan_in, out}, rng.normal_matrix<Scalar>(fan_in, out, gain / std::sqrt(double(fan_in))),
                            true);
  c.bias = Tensor<Scalar>({out}, true);
  c.kernel = kernel;
  c.stride = stride;
  c.padding = padding;
  return c;
}

template <typename Scalar>
Tensor<Scalar> Conv1d<Scalar>::operator()(const Tensor<Scalar>& x, Index batch) const {
  return conv1d(x, weight, bias, Conv1dSpec{batch, kernel, stride, padding});
}

template <typename Scalar>
void Conv1d<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& fn) {
  fn(prefix + "/w", weight);
  fn(prefix + "/b", bias);
}

template <typename Scalar>
LayerNorm<Scalar> LayerNorm<Scalar>::init(Index dim) {
  LayerNorm n;
  n.gain = Tensor<Scalar>({dim}, Mat<Scalar>::Ones(1, dim), true);
  n.bias = Tensor<Scalar>({dim}, true);
  return n;
}

template <typename Scalar>
Tensor<Scalar> LayerNorm<Scalar>::operator()(const Tensor<Scalar>& x) const {
  return layer_norm(x, gain, bias);
}

template <typename Scalar>
void LayerNorm<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& fn) {
  fn(prefix + "/gain", gain);
  fn(prefix + "/bias", bias);
}

template <typename Scalar>
TransformerBlock<Scalar> TransformerBlock<Scalar>::init(Index dim, Index mlp_dim, Rng& rng) {
  TransformerBlock b;
  b.ln1 = LayerNorm<Scalar>::init(dim);
  b.ln2 = LayerNorm<Scalar>::init(dim);
  b.q = Linear<Scalar>::init(dim, dim, rng);
  b.k = Linear<Scalar>::init(dim, dim, rng);
  b.v = Linear<Scalar>::init(dim, dim, rng);
  b.o = Linear<Scalar>::init(dim, dim, rng, true, 0.5);
  b.up = Linear<Scalar>::init(dim, mlp_dim, rng);
  b.down = Linear<Scalar>::init(mlp_dim, dim, rng, true, 0.5);
  return b;
}

template <typename Scalar>
Tensor<Scalar> TransformerBlock<Scalar>::operator()(const Tensor<Scalar>& x, const AttentionMask& mask, Index heads,
                                                    Index groups) const {
  const Tensor<Scalar> h = ln1(x);
  Tensor<Scalar> y = add(x, o(attention(q(h), k(h), v(h), mask, heads, groups)));
  return add(y, down(gelu(up(ln2(y)))));
}

template <typename Scalar>
void TransformerBlock<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& fn) {
  ln1.visit(prefix + "/ln1", fn);
  q.visit(prefix + "/q", fn);
  k.visit(prefix + "/k", fn);
  v.visit(prefix + "/v", fn);
  o.visit(prefix + "/o", fn);
  ln2.visit(prefix + "/ln2", fn);
  up.visit(prefix + "/up", fn);
  down.visit(prefix + "/down", fn);
}

template struct Linear<float>;
template struct Linear<double>;
template struct Conv1d<float>;
template struct Conv1d<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct TransformerBlock<float>;
template struct TransformerBlock<double>;

}  // namespace moelora
