// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/core/ops.hpp"

#include <cmath>
#include <numbers>

namespace moelora {
namespace {

template <typename Scalar>
using Node = detail::Node<Scalar>;

template <typename Scalar>
Node<Scalar>& parent(Node<Scalar>& self, std::size_t i) {
  return *self.parents[i];
}

void require(bool ok, const char* message) {
  if (!ok) throw ShapeError(message);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Flat row-vector view of any storage.
template <typename Scalar>
Eigen::Map<const RowVec<Scalar>> as_row(const Mat<Scalar>& m) {
  return Eigen::Map<const RowVec<Scalar>>(m.data(), m.size());
}
template <typename Scalar>
Eigen::Map<RowVec<Scalar>> as_row(Mat<Scalar>& m) {
  return Eigen::Map<RowVec<Scalar>>(m.data(), m.size());
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.rank() >= 1 && b.rank() == 2, "matmul: expects [..., k] x [k, p]");
  require(a.value().cols() == b.dim(0), "matmul: inner dimensions differ " + to_string(a.shape()) + " x " +
                                            to_string(b.shape()));
  Shape out_shape = a.shape();
  out_shape.back() = b.dim(1);
  Mat<Scalar> out = a.value() * b.value();
  return Tensor<Scalar>::make_result(std::move(out_shape), std::move(out), {a, b},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       auto& pb = parent(self, 1);
                                       if (pa.requires_grad) pa.grad_buffer().noalias() += self.grad * pb.value.transpose();
                                       if (pb.requires_grad) pb.grad_buffer().noalias() += pa.value.transpose() * self.grad;
                                     },
                                     "matmul");
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "add");
  return Tensor<Scalar>::make_result(a.shape(), a.value() + b.value(), {a, b},
                                     [](Node<Scalar>& self) {
                                       for (std::size_t i = 0; i < 2; ++i) {
                                         auto& p = parent(self, i);
                                         if (p.requires_grad) p.grad_buffer() += self.grad;
                                       }
                                     },
                                     "add");
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "sub");
  return Tensor<Scalar>::make_result(a.shape(), a.value() - b.value(), {a, b},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       auto& pb = parent(self, 1);
                                       if (pa.requires_grad) pa.grad_buffer() += self.grad;
                                       if (pb.requires_grad) pb.grad_buffer() -= self.grad;
                                     },
                                     "sub");
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mul");
  Mat<Scalar> out = a.value().cwiseProduct(b.value());
  return Tensor<Scalar>::make_result(a.shape(), std::move(out), {a, b},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       auto& pb = parent(self, 1);
                                       if (pa.requires_grad) pa.grad_buffer() += self.grad.cwiseProduct(pb.value);
                                       if (pb.requires_grad) pb.grad_buffer() += self.grad.cwiseProduct(pa.value);
                                     },
                                     "mul");
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  return Tensor<Scalar>::make_result(a.shape(), a.value() * factor, {a},
                                     [factor](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad) pa.grad_buffer() += self.grad * factor;
                                     },
                                     "scale");
}

template <typename Scalar>
Tensor<Scalar> mul_scalar(const Tensor<Scalar>& a, const Tensor<Scalar>& s) {
  require(s.numel() == 1, "mul_scalar: factor must hold one element, got " + to_string(s.shape()));
  const Scalar factor = s.value()(0, 0);
  return Tensor<Scalar>::make_result(a.shape(), a.value() * factor, {a, s},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       auto& ps = parent(self, 1);
                                       const Scalar f = ps.value(0, 0);
                                       if (pa.requires_grad) pa.grad_buffer() += self.grad * f;
                                       if (ps.requires_grad) ps.grad_buffer()(0, 0) += self.grad.cwiseProduct(pa.value).sum();
                                     },
                                     "mul_scalar");
}

template <typename Scalar>
Tensor<Scalar> add_bias(const Tensor<Scalar>& a, const Tensor<Scalar>& bias) {
  require(bias.numel() == a.value().cols(),
          "add_bias: bias " + to_string(bias.shape()) + " does not match " + to_string(a.shape()));
  Mat<Scalar> out = a.value();
  out.rowwise() += as_row(bias.value());
  return Tensor<Scalar>::make_result(a.shape(), std::move(out), {a, bias},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       auto& pb = parent(self, 1);
                                       if (pa.requires_grad) pa.grad_buffer() += self.grad;
                                       if (pb.requires_grad) {
                                         as_row(pb.grad_buffer()) += self.grad.colwise().sum();
                                       }
                                     },
                                     "add_bias");
}

template <typename Scalar>
Tensor<Scalar> element(const Tensor<Scalar>& a, Index index) {
  require(index >= 0 && index < a.numel(), "element: index out of range");
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().data()[index];
  return Tensor<Scalar>::make_result(Shape{}, std::move(out), {a},
                                     [index](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad) pa.grad_buffer().data()[index] += self.grad(0, 0);
                                     },
                                     "element");
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor<Scalar>::make_result(Shape{}, std::move(out), {a},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad) pa.grad_buffer().array() += self.grad(0, 0);
                                     },
                                     "sum");
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  require(a.numel() > 0, "mean: empty tensor");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.numel());
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum() * inv;
  return Tensor<Scalar>::make_result(Shape{}, std::move(out), {a},
                                     [inv](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad) pa.grad_buffer().array() += self.grad(0, 0) * inv;
                                     },
                                     "mean");
}

template <typename Scalar>
Tensor<Scalar> mean_rows(const Tensor<Scalar>& a) {
  const Index rows = a.value().rows();
  require(rows > 0, "mean_rows: no rows");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(rows);
  Mat<Scalar> out = a.value().colwise().sum() * inv;
  return Tensor<Scalar>::make_result(Shape{a.value().cols()}, std::move(out), {a},
                                     [inv](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad) pa.grad_buffer().rowwise() += self.grad.row(0) * inv;
                                     },
                                     "mean_rows");
}

template <typename Scalar>
Tensor<Scalar> mse(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mse");
  require(a.numel() > 0, "mse: empty tensor");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.numel());
  Mat<Scalar> out(1, 1);
  out(0, 0) = (a.value() - b.value()).squaredNorm() * inv;
  return Tensor<Scalar>::make_result(Shape{}, std::move(out), {a, b},
                                     [inv](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       auto& pb = parent(self, 1);
                                       const Scalar g = Scalar(2) * inv * self.grad(0, 0);
                                       if (pa.requires_grad) pa.grad_buffer() += g * (pa.value - pb.value);
                                       if (pb.requires_grad) pb.grad_buffer() -= g * (pa.value - pb.value);
                                     },
                                     "mse");
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  Mat<Scalar> out = a.value().cwiseMax(Scalar(0));
  return Tensor<Scalar>::make_result(a.shape(), std::move(out), {a},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad)
                                         pa.grad_buffer().array() +=
                                             (pa.value.array() > Scalar(0)).select(self.grad.array(), Scalar(0));
                                     },
                                     "relu");
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& a) {
  const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
  const Scalar k = Scalar(0.044715);
  const auto& x = a.value().array();
  Mat<Scalar> out = (Scalar(0.5) * x * (Scalar(1) + (c * (x + k * x.cube())).tanh())).matrix();
  return Tensor<Scalar>::make_result(a.shape(), std::move(out), {a},
                                     [c, k](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (!pa.requires_grad) return;
                                       const auto& x = pa.value.array();
                                       const auto t = (c * (x + k * x.cube())).tanh().eval();
                                       const auto d = (Scalar(0.5) * (Scalar(1) + t) +
                                                       Scalar(0.5) * x * (Scalar(1) - t.square()) * c *
                                                           (Scalar(1) + Scalar(3) * k * x.square()))
                                                          .eval();
                                       pa.grad_buffer().array() += self.grad.array() * d;
                                     },
                                     "gelu");
}

template <typename Scalar>
Tensor<Scalar> log_clamped(const Tensor<Scalar>& a, Scalar floor) {
  Mat<Scalar> out = a.value().cwiseMax(floor).array().log().matrix();
  return Tensor<Scalar>::make_result(a.shape(), std::move(out), {a},
                                     [floor](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (!pa.requires_grad) return;
                                       pa.grad_buffer().array() +=
                                           (pa.value.array() > floor).select(self.grad.array() / pa.value.array(), Scalar(0));
                                     },
                                     "log_clamped");
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& a) {
  require(a.value().cols() >= 1, "softmax: empty trailing axis");
  Mat<Scalar> out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  return Tensor<Scalar>::make_result(a.shape(), std::move(out), {a},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (!pa.requires_grad) return;
                                       const auto& y = self.value;
                                       Vec<Scalar> dot = y.cwiseProduct(self.grad).rowwise().sum();
                                       pa.grad_buffer().array() +=
                                           y.array() * (self.grad.colwise() - dot).array();
                                     },
                                     "softmax");
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias, Scalar eps) {
  const Index cols = x.value().cols();
  require(gain.numel() == cols && bias.numel() == cols, "layer_norm: parameter size mismatch");
  const Index rows = x.value().rows();
  Mat<Scalar> normalized(rows, cols);
  Vec<Scalar> inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    const auto row = x.value().row(r);
    const Scalar mu = row.mean();
    const Scalar var = (row.array() - mu).square().mean();
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    normalized.row(r) = (row.array() - mu) * inv_std(r);
  }
  const auto g = as_row(gain.value());
  const auto b = as_row(bias.value());
  Mat<Scalar> out = (normalized.array().rowwise() * g.array()).matrix();
  out.rowwise() += b;
  return Tensor<Scalar>::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [normalized = std::move(normalized), inv_std = std::move(inv_std)](Node<Scalar>& self) {
        auto& px = parent(self, 0);
        auto& pg = parent(self, 1);
        auto& pb = parent(self, 2);
        const Index n = self.grad.cols();
        if (pg.requires_grad) as_row(pg.grad_buffer()) += self.grad.cwiseProduct(normalized).colwise().sum();
        if (pb.requires_grad) as_row(pb.grad_buffer()) += self.grad.colwise().sum();
        if (px.requires_grad) {
          const auto gvec = as_row(pg.value);
          Mat<Scalar> dxhat = (self.grad.array().rowwise() * gvec.array()).matrix();
          auto& dx = px.grad_buffer();
          for (Index r = 0; r < dxhat.rows(); ++r) {
            const Scalar mean_d = dxhat.row(r).mean();
            const Scalar mean_dx = dxhat.row(r).dot(normalized.row(r)) / static_cast<Scalar>(n);
            dx.row(r).array() +=
                inv_std(r) * (dxhat.row(r).array() - mean_d - normalized.row(r).array() * mean_dx);
          }
        }
      },
      "layer_norm");
}

template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table, std::span<const Index> ids) {
  const Index rows = table.value().rows();
  const Index cols = table.value().cols();
  Mat<Scalar> out(static_cast<Index>(ids.size()), cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= rows) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(rows) +
                       " rows");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<Index> kept(ids.begin(), ids.end());
  return Tensor<Scalar>::make_result(Shape{static_cast<Index>(ids.size()), cols}, std::move(out), {table},
                                     [kept = std::move(kept)](Node<Scalar>& self) {
                                       auto& pt = parent(self, 0);
                                       if (!pt.requires_grad) return;
                                       auto& g = pt.grad_buffer();
                                       for (std::size_t i = 0; i < kept.size(); ++i)
                                         g.row(kept[i]) += self.grad.row(static_cast<Index>(i));
                                     },
                                     "gather_rows");
}

template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const Index cols = parts.front().value().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    require(p.value().cols() == cols, "concat_rows: trailing dimension mismatch");
    rows += p.value().rows();
  }
  Mat<Scalar> out(rows, cols);
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.value().rows()) = p.value();
    at += p.value().rows();
  }
  return Tensor<Scalar>::make_result(Shape{rows, cols}, std::move(out), parts,
                                     [offsets = std::move(offsets)](Node<Scalar>& self) {
                                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                                         auto& p = parent(self, i);
                                         if (p.requires_grad)
                                           p.grad_buffer() += self.grad.middleRows(offsets[i], p.value.rows());
                                       }
                                     },
                                     "concat_rows");
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.value().rows(), "slice_rows: range out of bounds");
  Mat<Scalar> out = a.value().middleRows(begin, count);
  return Tensor<Scalar>::make_result(Shape{count, a.value().cols()}, std::move(out), {a},
                                     [begin, count](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad) pa.grad_buffer().middleRows(begin, count) += self.grad;
                                     },
                                     "slice_rows");
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = parts.front().value().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    require(p.value().rows() == rows, "concat_cols: row count mismatch");
    cols += p.value().cols();
  }
  Mat<Scalar> out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.value().cols()) = p.value();
    at += p.value().cols();
  }
  return Tensor<Scalar>::make_result(Shape{rows, cols}, std::move(out), parts,
                                     [offsets = std::move(offsets)](Node<Scalar>& self) {
                                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                                         auto& p = parent(self, i);
                                         if (p.requires_grad)
                                           p.grad_buffer() += self.grad.middleCols(offsets[i], p.value.cols());
                                       }
                                     },
                                     "concat_cols");
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.value().cols(), "slice_cols: range out of bounds");
  Mat<Scalar> out = a.value().middleCols(begin, count);
  return Tensor<Scalar>::make_result(Shape{a.value().rows(), count}, std::move(out), {a},
                                     [begin, count](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad) pa.grad_buffer().middleCols(begin, count) += self.grad;
                                     },
                                     "slice_cols");
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  require(a.rank() == 2, "transpose: expects a 2-D tensor");
  Mat<Scalar> out = a.value().transpose();
  return Tensor<Scalar>::make_result(Shape{a.dim(1), a.dim(0)}, std::move(out), {a},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (pa.requires_grad) pa.grad_buffer() += self.grad.transpose();
                                     },
                                     "transpose");
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  require(numel(shape) == a.numel(), "reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  const auto [rows, cols] = storage_dims(shape);
  Mat<Scalar> out = a.value().template reshaped<Eigen::RowMajor>(rows, cols);
  return Tensor<Scalar>::make_result(std::move(shape), std::move(out), {a},
                                     [](Node<Scalar>& self) {
                                       auto& pa = parent(self, 0);
                                       if (!pa.requires_grad) return;
                                       auto& g = pa.grad_buffer();
                                       g += self.grad.template reshaped<Eigen::RowMajor>(g.rows(), g.cols());
                                     },
                                     "reshape");
}

AttentionMask causal_mask(Index length) {
  AttentionMask mask(length, length);
  for (Index i = 0; i < length; ++i)
    for (Index j = 0; j < length; ++j) mask(i, j) = j <= i;
  return mask;
}

template <typename Scalar>
Tensor<Scalar> attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                         const AttentionMask& mask, Index heads, Index groups) {
  const Index dim = q.value().cols();
  require(groups >= 1 && heads >= 1 && dim % heads == 0, "attention: model dim must divide into heads");
  require(k.value().cols() == dim && v.value().cols() == dim, "attention: q/k/v width mismatch");
  require(q.value().rows() % groups == 0 && k.value().rows() % groups == 0 && k.value().rows() == v.value().rows(),
          "attention: rows not divisible into groups");
  const Index tq = q.value().rows() / groups;
  const Index tk = k.value().rows() / groups;
  require(mask.rows() == tq && mask.cols() == tk, "attention: mask is not [T, S]");
  for (Index i = 0; i < tq; ++i) require(mask.row(i).any(), "attention: query row with no allowed key");

  const Index hd = dim / heads;
  const Scalar scl = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
  auto probs = std::make_shared<std::vector<Mat<Scalar>>>(static_cast<std::size_t>(groups * heads));
  Mat<Scalar> out(q.value().rows(), dim);
  for (Index g = 0; g < groups; ++g) {
    for (Index h = 0; h < heads; ++h) {
      const auto qh = q.value().block(g * tq, h * hd, tq, hd);
      const auto kh = k.value().block(g * tk, h * hd, tk, hd);
      const auto vh = v.value().block(g * tk, h * hd, tk, hd);
      Mat<Scalar> p = (qh * kh.transpose()) * scl;
      for (Index i = 0; i < tq; ++i) {
        Scalar mx = -std::numeric_limits<Scalar>::infinity();
        for (Index j = 0; j < tk; ++j)
          if (mask(i, j)) mx = std::max(mx, p(i, j));
        Scalar total = 0;
        for (Index j = 0; j < tk; ++j) {
          p(i, j) = mask(i, j) ? std::exp(p(i, j) - mx) : Scalar(0);
          total += p(i, j);
        }
        p.row(i) /= total;
      }
      out.block(g * tq, h * hd, tq, hd).noalias() = p * vh;
      (*probs)[static_cast<std::size_t>(g * heads + h)] = std::move(p);
    }
  }
  return Tensor<Scalar>::make_result(
      q.shape(), std::move(out), {q, k, v},
      [probs, groups, heads, tq, tk, hd, scl](Node<Scalar>& self) {
        auto& pq = parent(self, 0);
        auto& pk = parent(self, 1);
        auto& pv = parent(self, 2);
        for (Index g = 0; g < groups; ++g) {
          for (Index h = 0; h < heads; ++h) {
            const auto& p = (*probs)[static_cast<std::size_t>(g * heads + h)];
            const auto dout = self.grad.block(g * tq, h * hd, tq, hd);
            const auto qh = pq.value.block(g * tq, h * hd, tq, hd);
            const auto kh = pk.value.block(g * tk, h * hd, tk, hd);
            const auto vh = pv.value.block(g * tk, h * hd, tk, hd);
            if (pv.requires_grad) pv.grad_buffer().block(g * tk, h * hd, tk, hd).noalias() += p.transpose() * dout;
            if (!pq.requires_grad && !pk.requires_grad) continue;
            Mat<Scalar> dp = dout * vh.transpose();
            Vec<Scalar> rowdot = dp.cwiseProduct(p).rowwise().sum();
            Mat<Scalar> ds = p.cwiseProduct(dp.colwise() - rowdot) * scl;
            if (pq.requires_grad) pq.grad_buffer().block(g * tq, h * hd, tq, hd).noalias() += ds * kh;
            if (pk.requires_grad) pk.grad_buffer().block(g * tk, h * hd, tk, hd).noalias() += ds.transpose() * qh;
          }
        }
      },
      "attention");
}

template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      const Conv1dSpec& spec) {
  const Index cin = x.value().cols();
  require(spec.batch >= 1 && spec.kernel >= 1 && spec.stride >= 1 && spec.padding >= 0, "conv1d: invalid spec");
  require(x.value().rows() % spec.batch == 0, "conv1d: rows not divisible into batch");
  require(weight.value().rows() == spec.kernel * cin, "conv1d: weight rows must equal kernel * Cin");
  const Index cout = weight.value().cols();
  const Index len = x.value().rows() / spec.batch;
  const Index out_len = spec.output_length(len);
  if (len + 2 * spec.padding < spec.kernel || out_len < 1) {
    throw ShapeError("conv1d: output length < 1 for input length " + std::to_string(len));
  }
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == cout, "conv1d: bias size mismatch");

  // im2col: one row per output frame, one column block per tap.
  Mat<Scalar> cols = Mat<Scalar>::Zero(spec.batch * out_len, spec.kernel * cin);
  for (Index b = 0; b < spec.batch; ++b)
    for (Index t = 0; t < out_len; ++t)
      for (Index tap = 0; tap < spec.kernel; ++tap) {
        const Index src = t * spec.stride - spec.padding + tap;
        if (src >= 0 && src < len) cols.block(b * out_len + t, tap * cin, 1, cin) = x.value().row(b * len + src);
      }
  Mat<Scalar> out = cols * weight.value();
  if (has_bias) out.rowwise() += as_row(bias.value());

  std::vector<Tensor<Scalar>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor<Scalar>::make_result(
      Shape{spec.batch * out_len, cout}, std::move(out), parents,
      [cols = std::move(cols), spec, len, out_len, cin, has_bias](Node<Scalar>& self) {
        auto& px = parent(self, 0);
        auto& pw = parent(self, 1);
        if (pw.requires_grad) pw.grad_buffer().noalias() += cols.transpose() * self.grad;
        if (has_bias) {
          auto& pb = parent(self, 2);
          if (pb.requires_grad) as_row(pb.grad_buffer()) += self.grad.colwise().sum();
        }
        if (!px.requires_grad) return;
        const Mat<Scalar> dcols = self.grad * pw.value.transpose();
        auto& dx = px.grad_buffer();
        for (Index b = 0; b < spec.batch; ++b)
          for (Index t = 0; t < out_len; ++t)
            for (Index tap = 0; tap < spec.kernel; ++tap) {
              const Index src = t * spec.stride - spec.padding + tap;
              if (src >= 0 && src < len) dx.row(b * len + src) += dcols.block(b * out_len + t, tap * cin, 1, cin);
            }
      },
      "conv1d");
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest(const Tensor<Scalar>& x, Index batch, Index factor) {
  require(batch >= 1 && factor >= 1 && x.value().rows() % batch == 0, "upsample_nearest: invalid batch/factor");
  const Index len = x.value().rows() / batch;
  const Index cols = x.value().cols();
  Mat<Scalar> out(batch * len * factor, cols);
  for (Index b = 0; b < batch; ++b)
    for (Index t = 0; t < len * factor; ++t) out.row(b * len * factor + t) = x.value().row(b * len + t / factor);
  return Tensor<Scalar>::make_result(Shape{batch * len * factor, cols}, std::move(out), {x},
                                     [batch, len, factor](Node<Scalar>& self) {
                                       auto& px = parent(self, 0);
                                       if (!px.requires_grad) return;
                                       auto& g = px.grad_buffer();
                                       for (Index b = 0; b < batch; ++b)
                                         for (Index t = 0; t < len * factor; ++t)
                                           g.row(b * len + t / factor) += self.grad.row(b * len * factor + t);
                                     },
                                     "upsample_nearest");
}

template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const Index> targets, std::span<const Scalar> mask) {
  const Index rows = logits.value().rows();
  const Index vocab = logits.value().cols();
  require(static_cast<Index>(targets.size()) == rows && static_cast<Index>(mask.size()) == rows,
          "cross_entropy: targets/mask length must equal the number of positions");
  Scalar count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    require(mask[i] == Scalar(0) || mask[i] == Scalar(1), "cross_entropy: mask values must be 0 or 1");
    if (mask[i] != Scalar(0)) {
      require(targets[i] >= 0 && targets[i] < vocab, "cross_entropy: target id out of range");
      count += 1;
    }
  }
  if (count == 0) throw ShapeError("cross_entropy: empty mask");

  Mat<Scalar> probs(rows, vocab);
  Scalar loss = 0;
  for (Index r = 0; r < rows; ++r) {
    if (mask[static_cast<std::size_t>(r)] == Scalar(0)) {
      probs.row(r).setZero();
      continue;
    }
    const auto row = logits.value().row(r);
    const Scalar mx = row.maxCoeff();
    probs.row(r) = (row.array() - mx).exp();
    const Scalar z = probs.row(r).sum();
    probs.row(r) /= z;
    loss += std::log(z) + mx - row(targets[static_cast<std::size_t>(r)]);
  }
  Mat<Scalar> out(1, 1);
  out(0, 0) = loss / count;
  std::vector<Index> kept_targets(targets.begin(), targets.end());
  return Tensor<Scalar>::make_result(
      Shape{}, std::move(out), {logits},
      [probs = std::move(probs), kept_targets = std::move(kept_targets), count](Node<Scalar>& self) {
        auto& pl = parent(self, 0);
        if (!pl.requires_grad) return;
        const Scalar g = self.grad(0, 0) / count;
        auto& dl = pl.grad_buffer();
        for (Index r = 0; r < probs.rows(); ++r) {
          // masked rows have all-zero probabilities and no target term
          if (probs.row(r).isZero(0)) continue;
          dl.row(r) += g * probs.row(r);
          dl(r, kept_targets[static_cast<std::size_t>(r)]) -= g;
        }
      },
      "cross_entropy");
}

template <typename Scalar>
Tensor<Scalar> straight_through(const Tensor<Scalar>& encoded, const Tensor<Scalar>& quantized) {
  require_same_shape(encoded, quantized, "straight_through");
  return Tensor<Scalar>::make_result(quantized.shape(), quantized.value(), {encoded},
                                     [](Node<Scalar>& self) {
                                       auto& pe = parent(self, 0);
                                       if (pe.requires_grad) pe.grad_buffer() += self.grad;
                                     },
                                     "straight_through");
}

#define MOELORA_INSTANTIATE_OPS(S)                                                                            \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                              \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                                 \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                                 \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                                 \
  template Tensor<S> scale(const Tensor<S>&, S);                                                              \
  template Tensor<S> mul_scalar(const Tensor<S>&, const Tensor<S>&);                                          \
  template Tensor<S> add_bias(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> element(const Tensor<S>&, Index);                                                        \
  template Tensor<S> sum(const Tensor<S>&);                                                                   \
  template Tensor<S> mean(const Tensor<S>&);                                                                  \
  template Tensor<S> mean_rows(const Tensor<S>&);                                                             \
  template Tensor<S> mse(const Tensor<S>&, const Tensor<S>&);                                                 \
  template Tensor<S> relu(const Tensor<S>&);                                                                  \
  template Tensor<S> gelu(const Tensor<S>&);                                                                  \
  template Tensor<S> log_clamped(const Tensor<S>&, S);                                                        \
  template Tensor<S> softmax(const Tensor<S>&);                                                               \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);                     \
  template Tensor<S> gather_rows(const Tensor<S>&, std::span<const Index>);                                   \
  template Tensor<S> concat_rows(const std::vector<Tensor<S>>&);                                              \
  template Tensor<S> slice_rows(const Tensor<S>&, Index, Index);                                              \
  template Tensor<S> concat_cols(const std::vector<Tensor<S>>&);                                              \
  template Tensor<S> slice_cols(const Tensor<S>&, Index, Index);                                              \
  template Tensor<S> transpose(const Tensor<S>&);                                                             \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                                        \
  template Tensor<S> attention(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const AttentionMask&,    \
                               Index, Index);                                                                 \
  template Tensor<S> conv1d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const Conv1dSpec&);         \
  template Tensor<S> upsample_nearest(const Tensor<S>&, Index, Index);                                        \
  template Tensor<S> cross_entropy(const Tensor<S>&, std::span<const Index>, std::span<const S>);             \
  template Tensor<S> straight_through(const Tensor<S>&, const Tensor<S>&);

MOELORA_INSTANTIATE_OPS(float)
MOELORA_INSTANTIATE_OPS(double)

}  // namespace moelora
