// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/core/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace moelora {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::pair<Index, Index> storage_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  const Index cols = shape.back();
  const Index total = numel(shape);
  return {cols == 0 ? 0 : total / cols, cols};
}

namespace detail {

bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
NoGradGuard::~NoGradGuard() { detail::grad_mode() = previous_; }

template <typename Scalar>
void check_finite(const Mat<Scalar>& m, const char* what) {
  // x - x is NaN exactly for NaN/Inf entries; a vectorized sum is far
  // cheaper than allFinite() on large buffers.
  if (m.size() && !((m.array() - m.array()).sum() == Scalar(0))) throw NumericError(std::string("non-finite value produced by ") + what);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<NodeT>()) {
  const auto [rows, cols] = storage_dims(shape);
  node_->shape = std::move(shape);
  node_->value = Matrix::Zero(rows, cols);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Matrix value, bool requires_grad) : node_(std::make_shared<NodeT>()) {
  const auto [rows, cols] = storage_dims(shape);
  if (value.rows() != rows || value.cols() != cols) {
    throw ShapeError("value of size " + std::to_string(value.rows()) + "x" + std::to_string(value.cols()) +
                     " does not match shape " + to_string(shape));
  }
  check_finite<Scalar>(value, "tensor construction");
  node_->shape = std::move(shape);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(Shape{}, std::move(m));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_values(Shape shape, const std::vector<Scalar>& values, bool requires_grad) {
  const auto [rows, cols] = storage_dims(shape);
  if (static_cast<Index>(values.size()) != rows * cols) {
    throw ShapeError(std::to_string(values.size()) + " values for shape " + to_string(shape));
  }
  Matrix m = Eigen::Map<const Matrix>(values.data(), rows, cols);
  return Tensor(std::move(shape), std::move(m), requires_grad);
}

template <typename Scalar>
typename Tensor<Scalar>::Matrix& Tensor<Scalar>::mutable_value() {
  if (!node_->leaf) throw std::logic_error("mutable_value() on a non-leaf tensor");
  return node_->value;
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value(0, 0);
}

template <typename Scalar>
Tensor<Scalar>& Tensor<Scalar>::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::clone() const {
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  Tensor out;
  out.node_ = std::make_shared<NodeT>();
  out.node_->shape = node_->shape;
  out.node_->value = node_->value;
  return out;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::make_result(Shape shape, Matrix value, const std::vector<Tensor>& parents,
                                           BackwardFn fn, const char* op) {
  check_finite<Scalar>(value, op);
  Tensor out;
  out.node_ = std::make_shared<NodeT>();
  out.node_->shape = std::move(shape);
  out.node_->value = std::move(value);
  out.node_->op = op;
  out.node_->leaf = false;
  bool needs = false;
  if (detail::grad_mode()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (const auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(fn);
  }
  return out;
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
  if (numel() != 1) throw ShapeError("backward() requires a scalar, got " + to_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  // `order` owns its nodes so releasing a node's parents below cannot free
  // one that is still waiting for its turn.
  std::vector<std::shared_ptr<NodeT>> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<std::shared_ptr<NodeT>, std::size_t>> stack{{node_, 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      std::shared_ptr<NodeT> p = n->parents[next++];
      if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().array() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = it->get();
    if (n->leaf) {
      if (n->grad.size()) check_finite<Scalar>(n->grad, "backward (leaf gradient)");
      continue;
    }
    if (n->backward_fn && n->grad.size()) n->backward_fn(*n);
    // Release the consumed part of the tape.
    n->grad.resize(0, 0);
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite<float>(const Mat<float>&, const char*);
template void check_finite<double>(const Mat<double>&, const char*);

}  // namespace moelora
