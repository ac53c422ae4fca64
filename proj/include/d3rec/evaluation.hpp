#pragma once

// Offline evaluation over a dataset split, temperature sweeps, and the
// training driver with validation-based checkpoint selection.

#include "d3rec/inference.hpp"
#include "d3rec/training.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace d3rec {

struct GuidanceDefaults {
  double tau = 1.0;
  double w = 0.0;
  int t_prime = 0;
  std::vector<Index> ks = {10, 20};
};

struct KMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
  double entropy = 0.0;
  double coverage = 0.0;
};

struct SweepRow {
  double tau = 1.0;
  double recall = 0.0;
  double ndcg = 0.0;
  double entropy = 0.0;
  double coverage = 0.0;
};

struct MetricsReport {
  std::map<Index, KMetrics> at;
  std::size_t n_users_evaluated = 0;
  std::size_t n_users_skipped = 0;
  std::vector<SweepRow> sweep;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_users_evaluated"] = n_users_evaluated;
    j["n_users_skipped"] = n_users_skipped;
    for (const auto& [k, m] : at)
      j["at"][std::to_string(k)] = {{"recall", m.recall}, {"ndcg", m.ndcg}, {"entropy", m.entropy}, {"coverage", m.coverage}};
    if (!sweep.empty()) {
      j["sweep"] = nlohmann::json::array();
      for (const auto& r : sweep)
        j["sweep"].push_back(
            {{"tau", r.tau}, {"recall", r.recall}, {"ndcg", r.ndcg}, {"entropy", r.entropy}, {"coverage", r.coverage}});
    }
    return j;
  }
};

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "tau,recall,ndcg,entropy,coverage\n";
  for (const auto& r : rows) out << r.tau << ',' << r.recall << ',' << r.ndcg << ',' << r.entropy << ',' << r.coverage << '\n';
  return out.str();
}

struct EvalOptions {
  Split split = Split::test;
  double tau = 1.0;
  double w = 0.0;
  int t_prime = 0;
  std::vector<Index> ks = {10, 20};
  /// Per-user target preferences overriding the tempered history preference.
  const Tensor2* targets = nullptr;
  Index batch_size = 256;
};

/// Which splits form the user's visible history when evaluating `split`.
inline SplitMask history_splits(Split split) {
  return split == Split::test ? (kTrain | kValid) : kTrain;
}

/// Scores a batch of users: (user ids, history rows, condition rows) -> scores.
using BatchScorer = std::function<Tensor2(const std::vector<Index>&, const Tensor2&, const Tensor2&)>;

/// Ranks every user with a nonempty eval split and averages the metrics.
/// History items are masked; k is clamped to the number of unmasked items.
inline MetricsReport evaluate_scores(const InteractionDataset& ds, const EvalOptions& opts, const BatchScorer& scorer) {
  require(!opts.ks.empty(), "evaluate: K list is empty");
  const Tensor2& F = ds.F();
  const auto history = items_by_user(ds, history_splits(opts.split));
  const auto truth = items_by_user(ds, mask_of(opts.split));
  const Index k_max = *std::max_element(opts.ks.begin(), opts.ks.end());

  MetricsReport report;
  std::vector<Index> users;
  for (Index u = 0; u < ds.n_users(); ++u) {
    if (truth[static_cast<std::size_t>(u)].empty()) ++report.n_users_skipped;
    else users.push_back(u);
  }
  for (Index k : opts.ks) report.at[k] = KMetrics{};
  for (std::size_t begin = 0; begin < users.size(); begin += static_cast<std::size_t>(opts.batch_size)) {
    const std::size_t end = std::min(users.size(), begin + static_cast<std::size_t>(opts.batch_size));
    const std::vector<Index> batch(users.begin() + static_cast<std::ptrdiff_t>(begin),
                                   users.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor2 x0 = Tensor2::Zero(static_cast<Index>(batch.size()), ds.n_items());
    Tensor2 cond = Tensor2::Zero(static_cast<Index>(batch.size()), ds.n_categories());
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto& items = history[static_cast<std::size_t>(batch[r])];
      for (Index i : items) x0(static_cast<Index>(r), i) = 1.0;
      std::optional<Vector> target;
      if (opts.targets) target = opts.targets->row(batch[r]).transpose();
      cond.row(static_cast<Index>(r)) = resolve_target(category_preference(items, F), target, opts.tau).transpose();
    }
    const Tensor2 scores = scorer(batch, x0, cond);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const Index u = batch[r];
      const auto& hist = history[static_cast<std::size_t>(u)];
      const Index available = ds.n_items() - static_cast<Index>(hist.size());
      const Index k = std::min(k_max, available);
      if (k <= 0) continue;
      const RecommendationList list =
          recommend_topk(scores.row(static_cast<Index>(r)).transpose(), history_mask_of(hist, ds.n_items()), k, F);
      const std::unordered_set<Index> test(truth[static_cast<std::size_t>(u)].begin(), truth[static_cast<std::size_t>(u)].end());
      for (Index kk : opts.ks) {
        const auto n = static_cast<std::size_t>(std::min(kk, k));
        const std::span<const Index> top(list.items.data(), n);
        const Vector y = list_category_distribution(top, F);
        KMetrics& m = report.at[kk];
        m.recall += recall_at_k(top, test, kk);
        m.ndcg += ndcg_at_k(top, test, kk);
        m.entropy += entropy_at_k(y, ds.n_categories());
        m.coverage += coverage_at_k(y, ds.n_categories());
      }
      ++report.n_users_evaluated;
    }
  }
  if (report.n_users_evaluated > 0) {
    const double inv = 1.0 / static_cast<double>(report.n_users_evaluated);
    for (auto& [k, m] : report.at) {
      m.recall *= inv;
      m.ndcg *= inv;
      m.entropy *= inv;
      m.coverage *= inv;
    }
  }
  return report;
}

inline MetricsReport evaluate(const Denoiser& model, const NoiseSchedule& sched, const InteractionDataset& ds,
                              const EvalOptions& opts) {
  ReverseOptions rev;
  rev.t_prime = opts.t_prime;
  return evaluate_scores(ds, opts, [&](const std::vector<Index>&, const Tensor2& x0, const Tensor2& cond) {
    return reverse_denoise(model, x0, sched, cond, opts.w, rev);
  });
}

/// One evaluation row per temperature at a single K.
inline std::vector<SweepRow> pareto_sweep(const Denoiser& model, const NoiseSchedule& sched, const InteractionDataset& ds,
                                          const std::vector<double>& taus, EvalOptions opts, Index k = 20) {
  std::vector<SweepRow> rows;
  opts.ks = {k};
  for (double tau : taus) {
    opts.tau = tau;
    const KMetrics m = evaluate(model, sched, ds, opts).at.at(k);
    rows.push_back(SweepRow{tau, m.recall, m.ndcg, m.entropy, m.coverage});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Training driver

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  double val_recall20 = 0.0;
  double val_entropy20 = 0.0;
  double hm = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"losses", {{"recon", loss.recon}, {"cate", loss.cate}, {"ortho", loss.ortho}, {"emb", loss.emb}, {"total", loss.total}}},
            {"val_recall20", val_recall20},
            {"val_entropy20", val_entropy20},
            {"hm", hm}};
  }
};

struct FitResult {
  Denoiser best;
  Denoiser last;
  int best_epoch = 0;  // 1-based; 0 when no epoch ran
  std::vector<EpochRecord> history;
};

struct FitOptions {
  /// Validate each epoch and keep the harmonic-mean best; otherwise keep the last epoch.
  bool select_by_validation = true;
  GuidanceDefaults guidance;
  std::ostream* log = nullptr;  // one JSON line per epoch
};

inline FitResult fit(const InteractionDataset& ds, const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                     const FitOptions& fopts = {}) {
  cfg.validate();
  DenoiserConfig mc = model_cfg;
  mc.n_items = ds.n_items();
  mc.n_categories = ds.n_categories();
  const NoiseSchedule sched = cfg.schedule();
  const TrainingData data = prepare_training_data(ds, cfg);
  TrainState state(Denoiser(mc, cfg.seed), cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const bool validate = fopts.select_by_validation && ds.count(kValid) > 0;

  FitResult result{state.model, state.model, 0, {}};
  std::vector<ValidationPoint> points;
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochRecord rec;
    rec.loss = train_epoch(state, data, sched, cfg);
    rec.epoch = state.epoch;
    if (validate) {
      EvalOptions eo;
      eo.split = Split::valid;
      eo.tau = fopts.guidance.tau;
      eo.w = fopts.guidance.w;
      eo.t_prime = fopts.guidance.t_prime;
      eo.ks = {20};
      const KMetrics m = evaluate(state.model, sched, ds, eo).at.at(20);
      rec.val_recall20 = m.recall;
      rec.val_entropy20 = m.entropy;
      rec.hm = harmonic_mean(m.recall, m.entropy);
      points.push_back({m.recall, m.entropy});
      if (select_checkpoint(points) + 1 == points.size()) {
        result.best = state.model;
        result.best_epoch = rec.epoch;
      }
    } else {
      result.best = state.model;
      result.best_epoch = rec.epoch;
    }
    if (fopts.log) *fopts.log << rec.to_json().dump() << '\n';
    result.history.push_back(rec);
    if (validate && should_stop(points, cfg.early_stop_patience)) break;
  }
  result.last = state.model;
  return result;
}

}  // namespace d3rec
