// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moelora/core/ops.hpp"
#include "moelora/core/random.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace moelora {

template <typename Scalar>
struct PartCodebook {
  Tensor<Scalar> entries;             // [K, S]
  std::vector<std::int64_t> usage;    // cumulative assignment counts
  std::vector<std::int64_t> idle;     // batches since the entry was last assigned
  std::vector<bool> touched;          // assigned during the current batch
  // EMA mode statistics
  Vec<Scalar> ema_count;
  Mat<Scalar> ema_sum;

  PartCodebook() = default;
  PartCodebook(Index size, Index dim, bool trainable);

  Index size() const { return entries.defined() ? entries.dim(0) : 0; }
  Index dim() const { return entries.defined() ? entries.dim(1) : 0; }
  /// True once any entry is non-zero.
  bool initialized() const;
  void record(Index index);
  /// Closes a batch: resets idle counters of touched entries, ages the rest.
  void end_batch();
};

template <typename Scalar>
struct QuantizeResult {
  Index index = -1;
  Tensor<Scalar> z;  // [S], copy of the selected entry
  Scalar distance = 0;
};

/// Exhaustive nearest-entry search; ties resolve to the lowest index.
template <typename Scalar>
Index nearest_entry(const Mat<Scalar>& entries, const Eigen::Ref<const Mat<Scalar>>& v, Scalar* distance = nullptr);

/// Nearest codebook entry to v, with usage accounting.
template <typename Scalar>
QuantizeResult<Scalar> quantize(const Tensor<Scalar>& v, PartCodebook<Scalar>& codebook);

/// exp of the entropy of the normalized usage histogram; 0 when nothing was used.
double usage_perplexity(std::span<const std::int64_t> usage);

struct CodebookReport {
  std::vector<std::vector<std::int64_t>> histograms;
  std::vector<double> perplexity;
  Index resets = 0;
};

/// Re-seeds entries idle for at least `window` batches from random rows of
/// the matching part's recent encoder outputs, and reports usage.
template <typename Scalar>
CodebookReport codebook_health(std::span<PartCodebook<Scalar>> codebooks, std::span<const Mat<Scalar>> recent,
                               Index window, Rng& rng);

}  // namespace moelora
