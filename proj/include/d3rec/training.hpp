#pragma once

// Training objective: category re-weighted reconstruction, generated-list
// category matching, orthogonality between the two towers and the category
// head cross-entropy, plus the epoch loop and checkpoint selection.

#include "d3rec/dataset.hpp"
#include "d3rec/denoiser.hpp"
#include "d3rec/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace d3rec {

struct TrainConfig {
  int epochs = 100;
  Index batch_size = 400;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double lambda = 1e-2;
  double delta = 1.0;
  double gamma_min = 0.5;
  double gamma_max = 1.5;
  /// false disables item re-weighting (every rho_i = 1).
  bool reweight = true;
  double cond_dropout = 0.3;
  int steps = 15;
  double noise_scale = 1e-2;
  double noise_min = 5e-4;
  double noise_max = 5e-3;
  std::uint64_t seed = 7;
  /// Epochs without harmonic-mean improvement before stopping; 0 disables.
  int early_stop_patience = 0;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(lambda >= 0.0) || !(delta > 0.0)) throw ConfigError("lambda must be >= 0 and delta > 0");
    if (reweight && !(gamma_min < gamma_max)) throw ConfigError("gamma_min < gamma_max required (γ_min < γ_max)");
    if (!(gamma_min > 0.0)) throw ConfigError("gamma_min must be positive");
    if (!(cond_dropout >= 0.0 && cond_dropout < 1.0)) throw ConfigError("cond_dropout must lie in [0, 1)");
    if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0");
  }

  OptimizerConfig optimizer() const { return {learning_rate, weight_decay}; }
  NoiseSchedule schedule() const { return NoiseSchedule(steps, noise_scale, noise_min, noise_max); }
};

struct LossBreakdown {
  double recon = 0.0;
  double cate = 0.0;
  double ortho = 0.0;
  double emb = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    recon += o.recon;
    cate += o.cate;
    ortho += o.ortho;
    emb += o.emb;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double f) const { return {recon * f, cate * f, ortho * f, emb * f, total * f}; }
};

/// Combines the parts with the objective's weighting.
inline double combine_losses(double recon, double cate, double ortho, double emb, double lambda) {
  return recon + cate + lambda * (ortho + emb);
}

// ---------------------------------------------------------------------------
// Re-weighting

namespace detail {
inline Vector min_max_rescale(const Vector& v, double lo, double hi) {
  const double mn = v.minCoeff(), mx = v.maxCoeff();
  if (!(mx > mn)) return Vector::Ones(v.size());
  return (lo + (hi - lo) * ((v.array() - mn) / (mx - mn))).matrix();
}
}  // namespace detail

/// Category weight vectors for positives (favoring rare categories) and
/// negatives (favoring dominant ones). A uniform y yields all-ones.
inline std::pair<Vector, Vector> reweight_vectors(const Vector& y, double gamma_min, double gamma_max) {
  const Vector one_minus = (1.0 - y.array()).matrix();
  return {detail::min_max_rescale(one_minus, gamma_min, gamma_max), detail::min_max_rescale(y, gamma_min, gamma_max)};
}

/// rho_i = F[i] . y_pos for consumed items, F[i] . y_neg otherwise.
inline Vector item_weights(const Vector& x0, const Tensor2& F, const Vector& y_pos, const Vector& y_neg) {
  require(x0.size() == F.rows() && y_pos.size() == F.cols() && y_neg.size() == F.cols(), "item_weights: shape mismatch");
  const Vector pos = F * y_pos, neg = F * y_neg;
  Vector rho(x0.size());
  for (Index i = 0; i < x0.size(); ++i) rho[i] = x0[i] > 0.5 ? pos[i] : neg[i];
  return rho;
}

// ---------------------------------------------------------------------------
// Batches and losses

/// Everything random about one optimization step, fixed up front so the loss
/// is a deterministic function of the parameters.
struct TrainingBatch {
  Tensor2 x0;                      // B x |I| clean interactions
  Tensor2 y;                       // B x |C| category preferences
  Tensor2 rho;                     // B x |I| item weights
  std::vector<int> steps;          // diffusion step per row
  Tensor2 noise;                   // B x |I| standard normal
  std::vector<bool> cond_dropped;  // row fed the unconditional token
  std::uint64_t dropout_seed = 0;

  Index rows() const { return x0.rows(); }
};

/// Per-row weights for the given rows of clean data. rho depends only on the
/// data, never on condition dropout.
inline Tensor2 batch_item_weights(const Tensor2& x0, const Tensor2& y, const Tensor2& F, const TrainConfig& cfg) {
  Tensor2 rho = Tensor2::Ones(x0.rows(), x0.cols());
  if (!cfg.reweight) return rho;
  for (Index r = 0; r < x0.rows(); ++r) {
    const Vector yr = y.row(r).transpose();
    const auto [pos, neg] = reweight_vectors(yr, cfg.gamma_min, cfg.gamma_max);
    rho.row(r) = item_weights(x0.row(r).transpose(), F, pos, neg).transpose();
  }
  return rho;
}

inline TrainingBatch make_batch(const Tensor2& x0, const Tensor2& y, const Tensor2& rho, const NoiseSchedule& sched,
                                const TrainConfig& cfg, Rng& rng) {
  TrainingBatch b;
  b.x0 = x0;
  b.y = y;
  b.rho = rho;
  const Index B = x0.rows();
  std::uniform_int_distribution<int> step(1, sched.steps());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution drop(cfg.cond_dropout);
  b.steps.resize(static_cast<std::size_t>(B));
  b.cond_dropped.resize(static_cast<std::size_t>(B));
  for (Index r = 0; r < B; ++r) {
    b.steps[static_cast<std::size_t>(r)] = step(rng);
    b.cond_dropped[static_cast<std::size_t>(r)] = cfg.cond_dropout > 0.0 && drop(rng);
  }
  b.noise.resize(B, x0.cols());
  for (Index k = 0; k < b.noise.size(); ++k) b.noise.data()[k] = normal(rng);
  b.dropout_seed = rng();
  return b;
}

namespace detail {
inline constexpr double kOrthoEps = 1e-12;

inline Vector softmax(const Vector& v) {
  Vector e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}
}  // namespace detail

/// Squared cosine similarity between two latents.
inline double squared_cosine(const Vector& a, const Vector& g) {
  const double d = a.dot(g);
  return d * d / ((a.squaredNorm() + detail::kOrthoEps) * (g.squaredNorm() + detail::kOrthoEps));
}

/// Cross-entropy between the target preference and F^T softmax(scores).
inline double category_matching_loss(const Vector& scores, const Vector& y, const Tensor2& F) {
  const Vector yhat = F.transpose() * detail::softmax(scores);
  double loss = 0.0;
  for (Index c = 0; c < y.size(); ++c) loss -= y[c] * std::log(yhat[c] + kLogEps);
  return loss;
}

/// Evaluates the objective on a batch. With `model_for_grad` set, its
/// gradient buffers receive d(total)/d(theta) (accumulated, not zeroed).
inline LossBreakdown compute_losses(const Denoiser& model, const TrainingBatch& batch, const NoiseSchedule& sched,
                                    const TrainConfig& cfg, const Tensor2& F, Denoiser* model_for_grad = nullptr) {
  const Index B = batch.rows();
  const Index I = batch.x0.cols();
  require(B > 0, "compute_losses: empty batch");
  require(F.rows() == I && batch.y.cols() == F.cols(), "compute_losses: shape mismatch with item-category matrix");

  Tensor2 x_t(B, I);
  Tensor2 y_cond = batch.y;
  for (Index r = 0; r < B; ++r) {
    const double ab = sched.alpha_bar(batch.steps[static_cast<std::size_t>(r)]);
    x_t.row(r) = std::sqrt(ab) * batch.x0.row(r) + std::sqrt(1.0 - ab) * batch.noise.row(r);
    if (batch.cond_dropped[static_cast<std::size_t>(r)]) y_cond.row(r).setZero();
  }

  DenoiserCache cache;
  const DenoiserOutput out = model.forward(x_t, batch.steps, y_cond, true, batch.dropout_seed,
                                           model_for_grad ? &cache : nullptr);

  const double inv_b = 1.0 / static_cast<double>(B);
  LossBreakdown loss;
  DenoiserGrads grads;
  const bool want_grad = model_for_grad != nullptr;
  if (want_grad) {
    grads.x0_hat = Tensor2::Zero(B, I);
    grads.z_aware = Tensor2::Zero(B, out.z_aware.cols());
    grads.z_agnostic = Tensor2::Zero(B, out.z_agnostic.cols());
    grads.cate_logits = Tensor2::Zero(B, out.cate_logits.cols());
  }

  for (Index r = 0; r < B; ++r) {
    // reconstruction
    const Eigen::RowVectorXd diff = out.x0_hat.row(r) - batch.x0.row(r);
    loss.recon += cfg.delta * (batch.rho.row(r).array() * diff.array().square()).sum();
    if (want_grad) grads.x0_hat.row(r) += (2.0 * cfg.delta * inv_b) * (batch.rho.row(r).array() * diff.array()).matrix();

    // orthogonality
    const Vector za = out.z_aware.row(r).transpose(), zg = out.z_agnostic.row(r).transpose();
    const double d = za.dot(zg);
    const double na = za.squaredNorm() + detail::kOrthoEps, ng = zg.squaredNorm() + detail::kOrthoEps;
    loss.ortho += d * d / (na * ng);
    if (want_grad) {
      const double coef = cfg.lambda * inv_b * 2.0 * d / (na * ng);
      grads.z_aware.row(r) += (coef * (zg - (d / na) * za)).transpose();
      grads.z_agnostic.row(r) += (coef * (za - (d / ng) * zg)).transpose();
    }

    if (batch.cond_dropped[static_cast<std::size_t>(r)]) continue;
    const Vector y = batch.y.row(r).transpose();

    // category matching of the generated scores
    const Vector s = detail::softmax(out.x0_hat.row(r).transpose());
    const Vector yhat = F.transpose() * s;
    Vector q(y.size());
    for (Index c = 0; c < y.size(); ++c) {
      loss.cate -= y[c] * std::log(yhat[c] + kLogEps);
      q[c] = -y[c] / (yhat[c] + kLogEps);
    }
    if (want_grad) {
      const Vector a = F * q;
      grads.x0_hat.row(r) += (inv_b * (s.array() * (a.array() - s.dot(a)))).matrix().transpose();
    }

    // category head
    const Vector p = detail::softmax(out.cate_logits.row(r).transpose());
    for (Index c = 0; c < y.size(); ++c)
      if (y[c] > 0.0) loss.emb -= y[c] * std::log(p[c]);
    if (want_grad) grads.cate_logits.row(r) += (cfg.lambda * inv_b * (y.sum() * p - y)).transpose();
  }

  loss.recon *= inv_b;
  loss.ortho *= inv_b;
  loss.cate *= inv_b;
  loss.emb *= inv_b;
  loss.total = combine_losses(loss.recon, loss.cate, loss.ortho, loss.emb, cfg.lambda);
  if (!std::isfinite(loss.total))
    throw NumericError("non-finite loss (recon=" + std::to_string(loss.recon) + ", cate=" + std::to_string(loss.cate) +
                       ", ortho=" + std::to_string(loss.ortho) + ", emb=" + std::to_string(loss.emb) +
                       ", batch rows=" + std::to_string(B) + ")");
  if (want_grad) model_for_grad->backward(grads, cache);
  return loss;
}

// ---------------------------------------------------------------------------
// Epoch loop

/// Dense training rows for every user with at least one train interaction.
struct TrainingData {
  std::vector<Index> users;
  Tensor2 x0;   // rows aligned with users
  Tensor2 y;    // category preference per row
  Tensor2 rho;  // item weights per row
  Tensor2 F;
};

inline TrainingData prepare_training_data(const InteractionDataset& ds, const TrainConfig& cfg) {
  TrainingData data;
  data.F = ds.F();
  const auto lists = items_by_user(ds, kTrain);
  for (Index u = 0; u < ds.n_users(); ++u)
    if (!lists[static_cast<std::size_t>(u)].empty()) data.users.push_back(u);
  const auto n = static_cast<Index>(data.users.size());
  if (n == 0) throw DataError("no user has train interactions");
  data.x0 = Tensor2::Zero(n, ds.n_items());
  data.y = Tensor2::Zero(n, ds.n_categories());
  for (Index r = 0; r < n; ++r) {
    const auto& items = lists[static_cast<std::size_t>(data.users[static_cast<std::size_t>(r)])];
    for (Index i : items) data.x0(r, i) = 1.0;
    data.y.row(r) = category_preference(items, data.F).transpose();
  }
  data.rho = batch_item_weights(data.x0, data.y, data.F, cfg);
  return data;
}

struct TrainState {
  Denoiser model;
  Rng rng;
  std::int64_t step = 0;
  int epoch = 0;

  TrainState(Denoiser m, std::uint64_t seed) : model(std::move(m)), rng(seed) {}
};

namespace detail {
inline Tensor2 gather_rows(const Tensor2& m, const std::vector<Index>& rows) {
  Tensor2 out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}
}  // namespace detail

/// One pass over shuffled user batches; returns the row-weighted mean losses.
inline LossBreakdown train_epoch(TrainState& state, const TrainingData& data, const NoiseSchedule& sched,
                                 const TrainConfig& cfg) {
  const auto n = static_cast<Index>(data.users.size());
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), state.rng);
  LossBreakdown sum;
  const OptimizerConfig opt = cfg.optimizer();
  for (Index begin = 0; begin < n; begin += cfg.batch_size) {
    const Index end = std::min(n, begin + cfg.batch_size);
    const std::vector<Index> rows(order.begin() + begin, order.begin() + end);
    const TrainingBatch batch = make_batch(detail::gather_rows(data.x0, rows), detail::gather_rows(data.y, rows),
                                           detail::gather_rows(data.rho, rows), sched, cfg, state.rng);
    state.model.params().zero_grad();
    const LossBreakdown loss = compute_losses(state.model, batch, sched, cfg, data.F, &state.model);
    adamw_step(state.model.params(), opt, ++state.step);
    if (!state.model.params().all_finite()) throw NumericError("non-finite parameter after step " + std::to_string(state.step));
    sum += loss.scaled(static_cast<double>(end - begin));
  }
  ++state.epoch;
  return sum.scaled(1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Checkpoint selection

struct ValidationPoint {
  double recall20 = 0.0;
  double entropy20 = 0.0;
};

inline double harmonic_mean(double a, double b) {
  return a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
}

/// Epoch with the highest harmonic mean of Recall@20 and Entropy@20; the
/// earliest wins ties.
inline std::size_t select_checkpoint(const std::vector<ValidationPoint>& history) {
  require(!history.empty(), "select_checkpoint: empty history");
  std::size_t best = 0;
  for (std::size_t k = 1; k < history.size(); ++k)
    if (harmonic_mean(history[k].recall20, history[k].entropy20) >
        harmonic_mean(history[best].recall20, history[best].entropy20))
      best = k;
  return best;
}

/// True once `patience` epochs have passed without beating the best.
inline bool should_stop(const std::vector<ValidationPoint>& history, int patience) {
  if (patience <= 0 || history.empty()) return false;
  return static_cast<int>(history.size() - 1 - select_checkpoint(history)) >= patience;
}

}  // namespace d3rec
