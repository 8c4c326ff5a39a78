// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/core/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace moelora {

template <typename Scalar>
void adamw_step(std::span<Tensor<Scalar>> params, OptimizerState<Scalar>& state, double lr) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.push_back(Mat<Scalar>::Zero(p.value().rows(), p.value().cols()));
      state.second_moment.push_back(Mat<Scalar>::Zero(p.value().rows(), p.value().cols()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].has_grad()) check_finite<Scalar>(params[i].grad(), "adamw_step (gradient)");
    if (state.first_moment[i].rows() != params[i].value().rows() ||
        state.first_moment[i].cols() != params[i].value().cols()) {
      throw ShapeError("adamw_step: moment shape does not match parameter " + std::to_string(i));
    }
  }

  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].mutable_value();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (params[i].has_grad()) {
      const auto& g = params[i].grad();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    } else {
      m *= b1;
      v *= b2;
    }
    if (state.weight_decay != 0.0) p *= static_cast<Scalar>(1.0 - lr * state.weight_decay);
    const auto step_size = static_cast<Scalar>(lr / bc1);
    const auto denom = (v.array() / static_cast<Scalar>(bc2)).sqrt() + static_cast<Scalar>(state.eps);
    p.array() -= step_size * m.array() / denom;
  }
}

template <typename Scalar>
AdamW<Scalar>::AdamW(std::vector<Tensor<Scalar>> params, OptimizerState<Scalar> hyper)
    : params_(std::move(params)), state_(std::move(hyper)) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw std::invalid_argument("AdamW: frozen tensor in the trainable parameter list");
  }
}

template <typename Scalar>
void AdamW<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double cosine_lr(std::int64_t t, std::int64_t total, double lr0, double lr_min) {
  if (total <= 0) throw std::invalid_argument("cosine_lr: total steps must be positive");
  const double clamped = static_cast<double>(std::clamp<std::int64_t>(t, 0, total));
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * clamped / static_cast<double>(total)));
}

double LrSchedule::at(std::int64_t t) const {
  if (kind == ScheduleKind::constant) return initial;
  return cosine_lr(t, total_steps, initial, minimum);
}

template void adamw_step<float>(std::span<Tensor<float>>, OptimizerState<float>&, double);
template void adamw_step<double>(std::span<Tensor<double>>, OptimizerState<double>&, double);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace moelora
