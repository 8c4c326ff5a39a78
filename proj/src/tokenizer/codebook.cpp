// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/tokenizer/codebook.hpp"

#include <cmath>

namespace moelora {

template <typename Scalar>
PartCodebook<Scalar>::PartCodebook(Index size, Index dim, bool trainable)
    : entries({size, dim}, trainable),
      usage(static_cast<std::size_t>(size), 0),
      idle(static_cast<std::size_t>(size), 0),
      touched(static_cast<std::size_t>(size), false) {}

template <typename Scalar>
bool PartCodebook<Scalar>::initialized() const {
  return entries.defined() && entries.value().size() > 0 && entries.value().cwiseAbs().maxCoeff() > Scalar(0);
}

template <typename Scalar>
void PartCodebook<Scalar>::record(Index index) {
  ++usage[static_cast<std::size_t>(index)];
  touched[static_cast<std::size_t>(index)] = true;
}

template <typename Scalar>
void PartCodebook<Scalar>::end_batch() {
  for (std::size_t k = 0; k < touched.size(); ++k) {
    idle[k] = touched[k] ? 0 : idle[k] + 1;
    touched[k] = false;
  }
}

template <typename Scalar>
Index nearest_entry(const Mat<Scalar>& entries, const Eigen::Ref<const Mat<Scalar>>& v, Scalar* distance) {
  if (entries.rows() == 0) throw std::invalid_argument("quantize: empty codebook");
  if (v.size() != entries.cols()) {
    throw ShapeError("quantize: vector of size " + std::to_string(v.size()) + " against codebook dim " +
                     std::to_string(entries.cols()));
  }
  Index best = 0;
  Scalar best_d = std::numeric_limits<Scalar>::infinity();
  for (Index k = 0; k < entries.rows(); ++k) {
    Scalar d = 0;
    for (Index c = 0; c < entries.cols(); ++c) {
      const Scalar diff = v.data()[c] - entries(k, c);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (distance) *distance = best_d;
  return best;
}

template <typename Scalar>
QuantizeResult<Scalar> quantize(const Tensor<Scalar>& v, PartCodebook<Scalar>& codebook) {
  check_finite<Scalar>(v.value(), "quantize input");
  QuantizeResult<Scalar> r;
  const Mat<Scalar> row = v.value().reshaped(1, v.numel());
  r.index = nearest_entry<Scalar>(codebook.entries.value(), row, &r.distance);
  r.z = Tensor<Scalar>({codebook.dim()}, codebook.entries.value().row(r.index));
  codebook.record(r.index);
  return r;
}

double usage_perplexity(std::span<const std::int64_t> usage) {
  double total = 0.0;
  for (auto u : usage) total += static_cast<double>(u);
  if (total <= 0.0) return 0.0;
  double entropy = 0.0;
  for (auto u : usage) {
    if (u <= 0) continue;
    const double p = static_cast<double>(u) / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

template <typename Scalar>
CodebookReport codebook_health(std::span<PartCodebook<Scalar>> codebooks, std::span<const Mat<Scalar>> recent,
                               Index window, Rng& rng) {
  CodebookReport report;
  for (std::size_t p = 0; p < codebooks.size(); ++p) {
    auto& cb = codebooks[p];
    report.histograms.push_back(cb.usage);
    report.perplexity.push_back(usage_perplexity(cb.usage));
    if (p >= recent.size() || recent[p].rows() == 0) continue;
    const Mat<Scalar>& pool = recent[p];
    for (Index k = 0; k < cb.size(); ++k) {
      auto& idle = cb.idle[static_cast<std::size_t>(k)];
      if (idle < window) continue;
      const Index src = rng.below(pool.rows());
      cb.entries.mutable_value().row(k) = pool.row(src);
      if (cb.ema_count.size()) {
        cb.ema_count(k) = Scalar(1);
        cb.ema_sum.row(k) = pool.row(src);
      }
      idle = 0;
      ++report.resets;
    }
  }
  return report;
}

template struct PartCodebook<float>;
template struct PartCodebook<double>;
template Index nearest_entry<float>(const Mat<float>&, const Eigen::Ref<const Mat<float>>&, float*);
template Index nearest_entry<double>(const Mat<double>&, const Eigen::Ref<const Mat<double>>&, double*);
template QuantizeResult<float> quantize(const Tensor<float>&, PartCodebook<float>&);
template QuantizeResult<double> quantize(const Tensor<double>&, PartCodebook<double>&);
template CodebookReport codebook_health(std::span<PartCodebook<float>>, std::span<const Mat<float>>, Index, Rng&);
template CodebookReport codebook_health(std::span<PartCodebook<double>>, std::span<const Mat<double>>, Index, Rng&);

}  // namespace moelora
