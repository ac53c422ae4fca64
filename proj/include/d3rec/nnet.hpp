#pragma once

// Minimal dense-network substrate: parameter store, dense layers with manual
// reverse mode, inverted dropout, AdamW and a finite-difference checker.

#include "d3rec/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace d3rec {

enum class Activation { identity, tanh };

struct Parameter {
  std::string name;
  Tensor2 value;
  Tensor2 grad;
  Tensor2 m;  // first moment
  Tensor2 v;  // second moment
};

/// Ordered collection of named parameters. The insertion order is the
/// checkpoint order and never changes after construction.
class ParamStore {
 public:
  std::size_t add(const std::string& name, Index rows, Index cols) {
    require(!index_.contains(name), "duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    params_.push_back(Parameter{name, Tensor2::Zero(rows, cols), Tensor2::Zero(rows, cols), Tensor2::Zero(rows, cols),
                                Tensor2::Zero(rows, cols)});
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t k) { return params_[k]; }
  const Parameter& operator[](std::size_t k) const { return params_[k]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t index_of(const std::string& name) const {
    const auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter " + name);
    return it->second;
  }
  Parameter& at(const std::string& name) { return params_[index_of(name)]; }
  const Parameter& at(const std::string& name) const { return params_[index_of(name)]; }

  Index total_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  /// Bumped whenever values change; forward caches record it.
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(total_count()));
    for (const auto& p : params_) flat.insert(flat.end(), p.value.data(), p.value.data() + p.value.size());
    return flat;
  }

  void assign_flat(std::span<const double> flat) {
    require(static_cast<Index>(flat.size()) == total_count(), "parameter blob size mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p.value.size(), p.value.data());
      off += static_cast<std::size_t>(p.value.size());
    }
    touch();
  }

  bool all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](const Parameter& p) { return p.value.allFinite(); });
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t version_ = 0;
};

inline void xavier_uniform(Tensor2& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
}

inline void apply_activation(Tensor2& z, Activation act) {
  if (act == Activation::tanh) z = z.array().tanh().matrix();
}

/// act(input * W + b) with b a 1 x out row.
inline Tensor2 dense_forward(const Tensor2& input, const Tensor2& W, const Tensor2& b, Activation act) {
  require(input.cols() == W.rows(), "dense_forward: input width " + std::to_string(input.cols()) +
                                        " does not match weight rows " + std::to_string(W.rows()));
  require(b.rows() == 1 && b.cols() == W.cols(), "dense_forward: bias shape mismatch");
  Tensor2 out = input * W;
  out.rowwise() += b.row(0);
  apply_activation(out, act);
  return out;
}

struct DenseLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Activation act = Activation::identity;
};

struct DenseCache {
  Tensor2 input;
  Tensor2 output;
  std::uint64_t version = 0;
  bool filled = false;
};

inline DenseLayer add_dense(ParamStore& store, const std::string& name, Index in, Index out, Activation act) {
  DenseLayer layer;
  layer.weight = store.add(name + ".weight", in, out);
  layer.bias = store.add(name + ".bias", 1, out);
  layer.act = act;
  return layer;
}

inline Tensor2 forward(const ParamStore& store, const DenseLayer& layer, const Tensor2& input, DenseCache* cache) {
  Tensor2 out = dense_forward(input, store[layer.weight].value, store[layer.bias].value, layer.act);
  if (cache) {
    cache->input = input;
    cache->output = out;
    cache->version = store.version();
    cache->filled = true;
  }
  return out;
}

/// Accumulates dL/dW and dL/db into the store and returns dL/dinput.
inline Tensor2 backward(ParamStore& store, const DenseLayer& layer, const Tensor2& grad_out, DenseCache& cache) {
  require(cache.filled && cache.version == store.version(), "backward: stale or missing forward cache");
  require(grad_out.rows() == cache.output.rows() && grad_out.cols() == cache.output.cols(),
          "backward: upstream gradient shape mismatch");
  Tensor2 dz = grad_out;
  if (layer.act == Activation::tanh) dz.array() *= (1.0 - cache.output.array().square());
  store[layer.weight].grad.noalias() += cache.input.transpose() * dz;
  store[layer.bias].grad.row(0) += dz.colwise().sum();
  cache.filled = false;
  return dz * store[layer.weight].value.transpose();
}

/// Inverted-dropout mask: entries are 0 with probability p, else 1/(1-p).
inline Tensor2 dropout_mask(Index rows, Index cols, double p, std::uint64_t seed) {
  require(p >= 0.0 && p < 1.0, "dropout probability must lie in [0, 1)");
  Tensor2 mask = Tensor2::Constant(rows, cols, 1.0);
  if (p == 0.0) return mask;
  Rng rng(seed);
  std::bernoulli_distribution drop(p);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Index k = 0; k < mask.size(); ++k) mask.data()[k] = drop(rng) ? 0.0 : keep_scale;
  return mask;
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Decoupled weight decay followed by a bias-corrected Adam update.
/// `step_count` is 1-based.
inline void adamw_step(ParamStore& store, const OptimizerConfig& cfg, std::int64_t step_count) {
  require(step_count >= 1, "adamw_step: step_count is 1-based");
  if (!(cfg.learning_rate >= 0.0) || !(cfg.weight_decay >= 0.0)) throw ConfigError("learning rate and weight decay must be >= 0");
  for (const auto& p : store)
    if (!p.grad.allFinite()) throw NumericError("non-finite gradient in parameter " + p.name);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
  for (auto& p : store) {
    p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * p.grad;
    p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
    if (cfg.learning_rate == 0.0) continue;
    p.value *= (1.0 - cfg.learning_rate * cfg.weight_decay);
    p.value.array() -= cfg.learning_rate * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + cfg.eps);
  }
  store.touch();
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckOptions {
  double step = 1e-5;
  /// Entries checked per tensor; larger tensors are subsampled.
  std::size_t max_entries_per_tensor = 64;
  std::uint64_t seed = 0;
  /// Denominator floor so that vanishing gradients compare absolutely.
  double abs_floor = 1e-7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  std::size_t entries_checked = 0;
};

/// Compares store.grad (already populated) against central differences of
/// `loss`, which must be deterministic.
inline GradCheckReport gradient_check(const std::function<double(const ParamStore&)>& loss, const ParamStore& store,
                                      const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  ParamStore probe = store;
  Rng rng(opts.seed);
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const Index n = probe[k].value.size();
    std::vector<Index> entries(static_cast<std::size_t>(n));
    std::iota(entries.begin(), entries.end(), Index{0});
    if (entries.size() > opts.max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opts.max_entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }
    for (Index e : entries) {
      double& theta = probe[k].value.data()[e];
      const double saved = theta;
      theta = saved + opts.step;
      probe.touch();
      const double up = loss(probe);
      theta = saved - opts.step;
      probe.touch();
      const double down = loss(probe);
      theta = saved;
      probe.touch();
      const double numeric = (up - down) / (2.0 * opts.step);
      const double analytic = store[k].grad.data()[e];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
      ++report.entries_checked;
      if (report.worst_index < 0 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = store[k].name;
        report.worst_index = e;
      }
    }
  }
  return report;
}

}  // namespace d3rec
