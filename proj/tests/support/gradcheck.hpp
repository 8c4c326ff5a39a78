// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking in double precision.

#pragma once

#include "moelora/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace moelora::testing {

struct GradCheck {
  double max_rel_error = 0;
  std::size_t worst = 0;  // index into the parameter list
};

/// ||a - n|| / max(||a||, ||n||, floor) per parameter, where `a` is the
/// reverse-mode gradient and `n` the central difference. `loss` must rebuild
/// its graph from the current parameter values on every call.
template <typename LossFn>
GradCheck check_gradients(LossFn&& loss, std::vector<Tensor<double>> params, double eps = 1e-6,
                          double floor = 1e-6) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  std::vector<Mat<double>> analytic;
  for (auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : Mat<double>::Zero(p.value().rows(), p.value().cols()));
  }
  GradCheck out;
  NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat<double>& value = params[k].mutable_value();
    Mat<double> numeric(value.rows(), value.cols());
    for (Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + eps;
      const double plus = loss().item();
      value.data()[i] = saved - eps;
      const double minus = loss().item();
      value.data()[i] = saved;
      numeric.data()[i] = (plus - minus) / (2 * eps);
    }
    const double denom = std::max({analytic[k].norm(), numeric.norm(), floor});
    const double rel = (analytic[k] - numeric).norm() / denom;
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = k;
    }
  }
  return out;
}

inline constexpr double kGradTolerance = 1e-4;
inline constexpr int kGradSeeds = 10;

}  // namespace moelora::testing
