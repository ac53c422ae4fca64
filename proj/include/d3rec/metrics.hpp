#pragma once

// Top-K accuracy and category-diversity metrics.

#include "d3rec/common.hpp"
#include "d3rec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <unordered_set>
#include <vector>

namespace d3rec {

/// |topk ∩ test| / min(k, |test|). Only the first k entries of `topk` count.
inline double recall_at_k(std::span<const Index> topk, const std::unordered_set<Index>& test, Index k) {
  if (test.empty() || k <= 0) return 0.0;
  const auto n = std::min<std::size_t>(topk.size(), static_cast<std::size_t>(k));
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) hits += test.contains(topk[r]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(std::min<std::size_t>(static_cast<std::size_t>(k), test.size()));
}

/// Binary-relevance NDCG truncated at k; the ideal list has min(k, |test|) hits.
inline double ndcg_at_k(std::span<const Index> topk, const std::unordered_set<Index>& test, Index k) {
  if (test.empty() || k <= 0) return 0.0;
  const auto n = std::min<std::size_t>(topk.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    if (test.contains(topk[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  const auto ideal = std::min<std::size_t>(static_cast<std::size_t>(k), test.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

/// Category distribution of a recommended list: F^T x / ||F^T x||_1.
inline Vector list_category_distribution(std::span<const Index> items, const Tensor2& F) {
  Vector y = Vector::Zero(F.cols());
  for (Index i : items) y += F.row(i).transpose();
  const double s = y.sum();
  if (s > 0.0) y /= s;
  return y;
}

/// H(y) / log|C| with 0 log 0 = 0; zero for a single category.
inline double entropy_at_k(const Vector& y_topk, Index n_categories) {
  if (n_categories <= 1) return 0.0;
  double h = 0.0;
  for (Index c = 0; c < y_topk.size(); ++c)
    if (y_topk[c] > 0.0) h -= y_topk[c] * std::log(y_topk[c]);
  return std::clamp(h / std::log(static_cast<double>(n_categories)), 0.0, 1.0);
}

/// Fraction of categories with nonzero mass in the list.
inline double coverage_at_k(const Vector& y_topk, Index n_categories) {
  if (n_categories <= 0) return 0.0;
  const auto nonzero = (y_topk.array() > 0.0).count();
  return static_cast<double>(nonzero) / static_cast<double>(n_categories);
}

}  // namespace d3rec
