// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moelora/core/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace moelora {

/// AdamW moments and hyperparameters for one parameter list.
template <typename Scalar>
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double base_lr = 1e-3;
  std::int64_t step = 0;
  std::vector<Mat<Scalar>> first_moment;
  std::vector<Mat<Scalar>> second_moment;
};

/// One AdamW update with bias correction and decoupled weight decay, reading
/// each parameter's accumulated gradient (a missing gradient counts as zero).
/// Throws NumericError on a non-finite gradient before touching anything.
template <typename Scalar>
void adamw_step(std::span<Tensor<Scalar>> params, OptimizerState<Scalar>& state, double lr);

/// Owns a parameter list and its OptimizerState.
template <typename Scalar>
class AdamW {
 public:
  AdamW(std::vector<Tensor<Scalar>> params, OptimizerState<Scalar> hyper);

  void step(double lr) { adamw_step<Scalar>(params_, state_, lr); }
  void step() { step(state_.base_lr); }
  void zero_grad();

  const OptimizerState<Scalar>& state() const { return state_; }
  const std::vector<Tensor<Scalar>>& params() const { return params_; }

 private:
  std::vector<Tensor<Scalar>> params_;
  OptimizerState<Scalar> state_;
};

enum class ScheduleKind { constant, cosine };

/// lr_min + 0.5 (lr0 - lr_min) (1 + cos(pi t / T)); T must be positive.
double cosine_lr(std::int64_t t, std::int64_t total, double lr0, double lr_min);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::cosine;
  double initial = 3e-3;
  double minimum = 0.0;
  std::int64_t total_steps = 1;

  double at(std::int64_t t) const;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace moelora
