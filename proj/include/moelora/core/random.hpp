// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moelora/core/tensor.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace moelora {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seeded generator. Components never share a stream: each asks for its own
/// with derive(tag), so adding draws in one place leaves the others unchanged.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng derive(std::string_view tag) const;
  Rng derive(std::uint64_t index) const;
  std::uint64_t seed() const { return seed_; }

  double uniform();  // [0, 1)
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [0, n).
  Index below(Index n);
  std::mt19937_64& engine() { return engine_; }

  template <typename Scalar>
  Mat<Scalar> normal_matrix(Index rows, Index cols, double stddev) {
    Mat<Scalar> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(normal(0.0, stddev));
    return m;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace moelora
