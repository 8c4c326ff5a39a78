// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense tensors with tape-based reverse-mode gradients.
//
// A Tensor is a shared handle to a graph node. Storage is a row-major Eigen
// matrix whose column count is the trailing dimension and whose row count is
// the product of all leading dimensions (scalars are 1x1, shape {}). Every
// operation in ops.hpp records its parents and a backward closure; the graph
// is rebuilt on each forward pass and released after backward().

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace moelora {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward value or an accumulated gradient is NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);
/// (rows, cols) of the backing matrix for a shape.
std::pair<Index, Index> storage_dims(const Shape& shape);

namespace detail {

template <typename Scalar>
struct Node {
  Shape shape;
  Mat<Scalar> value;
  Mat<Scalar> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Mat<Scalar>& grad_buffer() {
    if (grad.size() == 0) grad = Mat<Scalar>::Zero(value.rows(), value.cols());
    return grad;
  }
};

bool& grad_mode();

}  // namespace detail

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
class Tensor {
 public:
  using Matrix = Mat<Scalar>;
  using NodeT = detail::Node<Scalar>;
  using BackwardFn = std::function<void(NodeT&)>;

  Tensor() = default;
  /// Zero-filled leaf.
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Matrix value, bool requires_grad = false);

  static Tensor scalar(Scalar v);
  static Tensor from_values(Shape shape, const std::vector<Scalar>& values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  Index numel() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  /// Direct write access; only valid for leaves outside a live tape.
  Matrix& mutable_value();
  Scalar item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  /// Reverse sweep from a scalar; gradients accumulate into leaves.
  void backward() const;

  /// Deep copy as a fresh leaf with the same requires_grad flag.
  Tensor clone() const;
  /// Same values, no history, no gradient.
  Tensor detach() const;

  const std::shared_ptr<NodeT>& node() const { return node_; }

  /// Builds an operation result. If no parent requires a gradient (or grad
  /// mode is off) the result is a constant and the closure is discarded.
  /// Closures must skip parents whose requires_grad flag is false.
  static Tensor make_result(Shape shape, Matrix value, const std::vector<Tensor>& parents, BackwardFn fn,
                            const char* op);

 private:
  std::shared_ptr<NodeT> node_;
};

/// Throws NumericError naming `what` when `m` holds a NaN or Inf.
template <typename Scalar>
void check_finite(const Mat<Scalar>& m, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace moelora
