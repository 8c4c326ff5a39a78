// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/core/random.hpp"

namespace moelora {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

Rng Rng::derive(std::string_view tag) const { return Rng(mix64(seed_ ^ fnv1a(tag))); }

Rng Rng::derive(std::uint64_t index) const { return Rng(mix64(seed_ + 0x632be59bd9b4e019ULL * (index + 1))); }

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }

Index Rng::below(Index n) {
  if (n <= 0) throw std::invalid_argument("Rng::below: n must be positive");
  return static_cast<Index>(std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_));
}

}  // namespace moelora
