#pragma once

// Guided generation: temperature shaping of preferences, classifier-free
// mixing of conditional/unconditional predictions, the deterministic
// corrupt-then-denoise loop and top-K ranking.

#include "d3rec/denoiser.hpp"
#include "d3rec/metrics.hpp"
#include "d3rec/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace d3rec {

/// softmax(log(y) / tau). Zero entries stay exactly zero.
inline Vector temper_preference(const Vector& y, double tau) {
  require(tau > 0.0 && std::isfinite(tau), "temper_preference: tau must be positive and finite");
  require((y.array() >= 0.0).all(), "temper_preference: negative preference entry");
  require(y.sum() > 0.0, "temper_preference: preference vector is all zero");
  double max_log = -std::numeric_limits<double>::infinity();
  for (Index c = 0; c < y.size(); ++c)
    if (y[c] > 0.0) max_log = std::max(max_log, std::log(y[c]) / tau);
  Vector out = Vector::Zero(y.size());
  for (Index c = 0; c < y.size(); ++c)
    if (y[c] > 0.0) out[c] = std::exp(std::log(y[c]) / tau - max_log);
  return out / out.sum();
}

/// Anything that maps (x_t batch, step, condition batch) to an x0 estimate.
template <typename P>
concept X0Predictor = requires(const P& p, const Tensor2& x, int t, const Tensor2& y) {
  { p(x, t, y) } -> std::convertible_to<Tensor2>;
};

/// Eval-mode adapter over a trained denoiser.
struct DenoiserPredictor {
  const Denoiser* model;
  Tensor2 operator()(const Tensor2& x_t, int t, const Tensor2& y) const { return model->predict(x_t, t, y); }
};

/// (1 + w) * x0(x_t, t, y) - w * x0(x_t, t, 0).
template <X0Predictor P>
Tensor2 guided_x0(const P& predict, const Tensor2& x_t, int t, const Tensor2& y_tilde, double w) {
  const Tensor2 cond = predict(x_t, t, y_tilde);
  if (w == 0.0) return cond;
  const Tensor2 uncond = predict(x_t, t, Tensor2::Zero(y_tilde.rows(), y_tilde.cols()));
  return ((1.0 + w) * cond - w * uncond).eval();
}

inline Tensor2 guided_x0(const Denoiser& model, const Tensor2& x_t, int t, const Tensor2& y_tilde, double w) {
  return guided_x0(DenoiserPredictor{&model}, x_t, t, y_tilde, w);
}

struct ReverseOptions {
  int t_prime = 0;
  /// Adds sampled forward noise during the T' corruption (experiments only).
  std::optional<std::uint64_t> corruption_noise_seed;
};

/// Corrupts x0 for T' steps (noise-free by default), then runs the full T-step
/// reverse recursion x_{t-1} = c0(t) * x0_hat + ct(t) * x_t on the posterior
/// mean. Rows are users.
template <X0Predictor P>
Tensor2 reverse_denoise(const P& predict, const Tensor2& x0, const NoiseSchedule& sched, const Tensor2& y_tilde,
                        double w, const ReverseOptions& opts = {}) {
  require(opts.t_prime >= 0 && opts.t_prime < sched.steps(), "reverse_denoise: t_prime must lie in [0, T)");
  require(x0.rows() == y_tilde.rows(), "reverse_denoise: one condition row per history row");
  Tensor2 x = x0;
  if (opts.t_prime > 0) {
    x *= std::sqrt(sched.alpha_bar(opts.t_prime));
    if (opts.corruption_noise_seed) {
      Rng rng(*opts.corruption_noise_seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      const double sd = std::sqrt(1.0 - sched.alpha_bar(opts.t_prime));
      for (Index k = 0; k < x.size(); ++k) x.data()[k] += sd * normal(rng);
    }
  }
  for (int t = sched.steps(); t >= 1; --t) {
    const Tensor2 x0_hat = guided_x0(predict, x, t, y_tilde, w);
    const PosteriorCoefficients k = sched.posterior(t);
    x = k.c0 * x0_hat + k.ct * x;
  }
  return x;
}

inline Tensor2 reverse_denoise(const Denoiser& model, const Tensor2& x0, const NoiseSchedule& sched, const Tensor2& y_tilde,
                               double w, const ReverseOptions& opts = {}) {
  return reverse_denoise(DenoiserPredictor{&model}, x0, sched, y_tilde, w, opts);
}

struct RecommendationList {
  std::vector<Index> items;
  std::vector<double> scores;
  Vector category_distribution;
  double entropy = 0.0;
  double coverage = 0.0;
};

/// Top-k unmasked items by score, ties broken by ascending item index.
inline RecommendationList recommend_topk(const Vector& scores, const std::vector<bool>& history_mask, Index k,
                                         const Tensor2& F) {
  require(static_cast<Index>(history_mask.size()) == scores.size(), "recommend_topk: mask length mismatch");
  require(F.rows() == scores.size(), "recommend_topk: item-category matrix row count mismatch");
  std::vector<Index> candidates;
  candidates.reserve(static_cast<std::size_t>(scores.size()));
  for (Index i = 0; i < scores.size(); ++i)
    if (!history_mask[static_cast<std::size_t>(i)]) candidates.push_back(i);
  require(k >= 1 && k <= static_cast<Index>(candidates.size()),
          "recommend_topk: k=" + std::to_string(k) + " exceeds the " + std::to_string(candidates.size()) + " unmasked items");
  auto better = [&scores](Index a, Index b) {
    const double sa = std::isnan(scores[a]) ? -std::numeric_limits<double>::infinity() : scores[a];
    const double sb = std::isnan(scores[b]) ? -std::numeric_limits<double>::infinity() : scores[b];
    return sa != sb ? sa > sb : a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), better);
  RecommendationList list;
  list.items.assign(candidates.begin(), candidates.begin() + k);
  for (Index i : list.items) list.scores.push_back(scores[i]);
  list.category_distribution = list_category_distribution(list.items, F);
  list.entropy = entropy_at_k(list.category_distribution, F.cols());
  list.coverage = coverage_at_k(list.category_distribution, F.cols());
  return list;
}

inline std::vector<bool> history_mask_of(const std::vector<Index>& items, Index n_items) {
  std::vector<bool> mask(static_cast<std::size_t>(n_items), false);
  for (Index i : items) mask[static_cast<std::size_t>(i)] = true;
  return mask;
}

/// Resolves the condition: an explicit target wins, otherwise the history
/// preference tempered by tau. An empty history gives the unconditional token.
inline Vector resolve_target(const Vector& history_pref, const std::optional<Vector>& target, double tau) {
  if (target) {
    require((target->array() >= 0.0).all() && target->sum() > 0.0, "target preference must be nonnegative and nonzero");
    return *target / target->sum();
  }
  if (history_pref.sum() <= 0.0) return history_pref;
  return temper_preference(history_pref, tau);
}

struct GuidanceRequest {
  std::vector<Index> history;
  std::optional<Vector> target;
  double tau = 1.0;
  double w = 0.0;
  Index k = 20;
  int t_prime = 0;
};

struct GuidedRecommendation {
  Vector applied_target;
  RecommendationList list;
};

/// Full single-user pipeline shared by the CLI and the HTTP service.
inline GuidedRecommendation recommend_for_history(const Denoiser& model, const NoiseSchedule& sched, const Tensor2& F,
                                                  const GuidanceRequest& req) {
  const Index n_items = F.rows();
  const Vector x0 = indicator(req.history, n_items);
  GuidedRecommendation out;
  out.applied_target = resolve_target(category_preference(x0, F), req.target, req.tau);
  ReverseOptions opts;
  opts.t_prime = req.t_prime;
  const Tensor2 scores = reverse_denoise(model, x0.transpose(), sched, out.applied_target.transpose(), req.w, opts);
  out.list = recommend_topk(scores.row(0).transpose(), history_mask_of(req.history, n_items), req.k, F);
  return out;
}

}  // namespace d3rec
