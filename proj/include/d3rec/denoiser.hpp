#pragma once

// Conditional x0-predictor with a category-aware tower (sees the condition)
// and a category-agnostic tower (does not), joined by a decoder that also
// receives a sinusoidal step embedding.
//
//   e      = tanh(y W_c + b_c)
//   z_aw   = tower_aware([x_t * mask, e])
//   z_ag   = tower_agnostic(x_t * mask)
//   x0_hat = linear(tanh([z_aw, z_ag, step(t)] W_d1 + b_d1))
//   logits = z_aw W_h + b_h

#include "d3rec/nnet.hpp"

#include <cmath>
#include <vector>

namespace d3rec {

struct DenoiserConfig {
  Index n_items = 0;
  Index n_categories = 0;
  Index hidden = 600;
  Index latent = 200;
  Index step_embed_dim = 16;
  Index cond_embed_dim = 16;
  double dropout = 0.1;

  void validate() const {
    if (n_items <= 0 || n_categories <= 0) throw ConfigError("denoiser needs positive item and category counts");
    if (hidden <= 0 || latent <= 0 || cond_embed_dim <= 0 || step_embed_dim <= 0)
      throw ConfigError("denoiser layer sizes must be positive");
    if (latent > hidden) throw ConfigError("latent must be <= hidden");
    if (step_embed_dim % 2 != 0) throw ConfigError("step_embed_dim must be even");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }
};

/// Sinusoidal encoding: entries (sin(t w_k), cos(t w_k)) interleaved, w_k = 10000^(-2k/dim).
inline Vector timestep_embedding(double t, Index dim) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("timestep embedding dimension must be positive and even");
  Vector e(dim);
  for (Index k = 0; k < dim / 2; ++k) {
    const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    e[2 * k] = std::sin(t * omega);
    e[2 * k + 1] = std::cos(t * omega);
  }
  return e;
}

struct DenoiserLayers {
  DenseLayer cond;
  DenseLayer aware_hidden;
  DenseLayer aware_latent;
  DenseLayer agnostic_hidden;
  DenseLayer agnostic_latent;
  DenseLayer decoder_hidden;
  DenseLayer decoder_out;
  DenseLayer category_head;
};

/// Registers every parameter in checkpoint order.
inline DenoiserLayers register_layers(ParamStore& store, const DenoiserConfig& cfg) {
  DenoiserLayers l;
  const Index I = cfg.n_items, C = cfg.n_categories, H = cfg.hidden, L = cfg.latent;
  l.cond = add_dense(store, "cond_embed", C, cfg.cond_embed_dim, Activation::tanh);
  l.aware_hidden = add_dense(store, "aware.hidden", I + cfg.cond_embed_dim, H, Activation::tanh);
  l.aware_latent = add_dense(store, "aware.latent", H, L, Activation::tanh);
  l.agnostic_hidden = add_dense(store, "agnostic.hidden", I, H, Activation::tanh);
  l.agnostic_latent = add_dense(store, "agnostic.latent", H, L, Activation::tanh);
  l.decoder_hidden = add_dense(store, "decoder.hidden", 2 * L + cfg.step_embed_dim, H, Activation::tanh);
  l.decoder_out = add_dense(store, "decoder.out", H, I, Activation::identity);
  l.category_head = add_dense(store, "category_head", L, C, Activation::identity);
  return l;
}

struct DenoiserOutput {
  Tensor2 x0_hat;       // B x |I|
  Tensor2 z_aware;      // B x latent
  Tensor2 z_agnostic;   // B x latent
  Tensor2 cate_logits;  // B x |C|
};

struct DenoiserCache {
  Tensor2 input_mask;
  DenseCache cond, aware_hidden, aware_latent, agnostic_hidden, agnostic_latent, decoder_hidden, decoder_out, head;
};

/// Upstream gradients for a batch; empty tensors mean "no gradient".
struct DenoiserGrads {
  Tensor2 x0_hat;
  Tensor2 z_aware;
  Tensor2 z_agnostic;
  Tensor2 cate_logits;
};

class Denoiser {
 public:
  Denoiser() = default;

  /// Fresh model: Xavier-uniform weights, zero biases.
  Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    layers_ = register_layers(params_, cfg_);
    Rng rng(seed);
    for (auto& p : params_)
      if (p.name.ends_with(".weight")) xavier_uniform(p.value, rng);
    params_.touch();
  }

  /// Model around existing parameter values (checkpoint load).
  Denoiser(const DenoiserConfig& cfg, std::span<const double> flat) : cfg_(cfg) {
    cfg_.validate();
    layers_ = register_layers(params_, cfg_);
    params_.assign_flat(flat);
  }

  const DenoiserConfig& config() const { return cfg_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  const DenoiserLayers& layers() const { return layers_; }

  /// Batched forward. `steps` holds one diffusion step per row; a zero row of
  /// `y_cond` is the unconditional token.
  DenoiserOutput forward(const Tensor2& x_t, const std::vector<int>& steps, const Tensor2& y_cond, bool train_mode,
                         std::uint64_t dropout_seed, DenoiserCache* cache = nullptr) const {
    const Index B = x_t.rows();
    require(x_t.cols() == cfg_.n_items, "denoiser: x_t width must equal n_items");
    require(y_cond.rows() == B && y_cond.cols() == cfg_.n_categories, "denoiser: condition shape mismatch");
    require(static_cast<Index>(steps.size()) == B, "denoiser: one step per row required");
    require((y_cond.array() >= 0.0).all(), "denoiser: condition entries must be nonnegative");

    Tensor2 x_in = x_t;
    Tensor2 mask;
    if (train_mode && cfg_.dropout > 0.0) {
      mask = dropout_mask(B, cfg_.n_items, cfg_.dropout, dropout_seed);
      x_in.array() *= mask.array();
    }
    auto* c = cache;
    const Tensor2 e = d3rec::forward(params_, layers_.cond, y_cond, c ? &c->cond : nullptr);
    Tensor2 aware_in(B, cfg_.n_items + cfg_.cond_embed_dim);
    aware_in << x_in, e;
    const Tensor2 ha = d3rec::forward(params_, layers_.aware_hidden, aware_in, c ? &c->aware_hidden : nullptr);
    DenoiserOutput out;
    out.z_aware = d3rec::forward(params_, layers_.aware_latent, ha, c ? &c->aware_latent : nullptr);
    const Tensor2 hg = d3rec::forward(params_, layers_.agnostic_hidden, x_in, c ? &c->agnostic_hidden : nullptr);
    out.z_agnostic = d3rec::forward(params_, layers_.agnostic_latent, hg, c ? &c->agnostic_latent : nullptr);

    Tensor2 step_emb(B, cfg_.step_embed_dim);
    for (Index r = 0; r < B; ++r)
      step_emb.row(r) = timestep_embedding(static_cast<double>(steps[static_cast<std::size_t>(r)]), cfg_.step_embed_dim).transpose();
    Tensor2 dec_in(B, 2 * cfg_.latent + cfg_.step_embed_dim);
    dec_in << out.z_aware, out.z_agnostic, step_emb;
    const Tensor2 hd = d3rec::forward(params_, layers_.decoder_hidden, dec_in, c ? &c->decoder_hidden : nullptr);
    out.x0_hat = d3rec::forward(params_, layers_.decoder_out, hd, c ? &c->decoder_out : nullptr);
    out.cate_logits = d3rec::forward(params_, layers_.category_head, out.z_aware, c ? &c->head : nullptr);
    if (c) c->input_mask = std::move(mask);
    return out;
  }

  /// Single-row convenience wrapper.
  DenoiserOutput predict_x0(const Vector& x_t, int step, const Vector& y_cond, bool train_mode = false,
                            std::uint64_t dropout_seed = 0) const {
    return forward(x_t.transpose(), {step}, y_cond.transpose(), train_mode, dropout_seed);
  }

  /// Eval-mode x0 prediction for a batch.
  Tensor2 predict(const Tensor2& x_t, int step, const Tensor2& y_cond) const {
    return forward(x_t, std::vector<int>(static_cast<std::size_t>(x_t.rows()), step), y_cond, false, 0).x0_hat;
  }

  /// Accumulates parameter gradients into params().grad.
  void backward(const DenoiserGrads& g, DenoiserCache& cache) {
    const Index L = cfg_.latent;
    Tensor2 g_za = g.z_aware.size() ? g.z_aware : Tensor2::Zero(cache.aware_latent.output.rows(), L);
    Tensor2 g_zg = g.z_agnostic.size() ? g.z_agnostic : Tensor2::Zero(cache.agnostic_latent.output.rows(), L);
    if (g.x0_hat.size()) {
      const Tensor2 g_hd = d3rec::backward(params_, layers_.decoder_out, g.x0_hat, cache.decoder_out);
      const Tensor2 g_dec_in = d3rec::backward(params_, layers_.decoder_hidden, g_hd, cache.decoder_hidden);
      g_za += g_dec_in.leftCols(L);
      g_zg += g_dec_in.middleCols(L, L);
    }
    if (g.cate_logits.size()) g_za += d3rec::backward(params_, layers_.category_head, g.cate_logits, cache.head);
    const Tensor2 g_ha = d3rec::backward(params_, layers_.aware_latent, g_za, cache.aware_latent);
    const Tensor2 g_aware_in = d3rec::backward(params_, layers_.aware_hidden, g_ha, cache.aware_hidden);
    d3rec::backward(params_, layers_.cond, g_aware_in.rightCols(cfg_.cond_embed_dim), cache.cond);
    const Tensor2 g_hg = d3rec::backward(params_, layers_.agnostic_latent, g_zg, cache.agnostic_latent);
    d3rec::backward(params_, layers_.agnostic_hidden, g_hg, cache.agnostic_hidden);
  }

 private:
  DenoiserConfig cfg_;
  ParamStore params_;
  DenoiserLayers layers_;
};

/// Closed-form parameter count of the architecture above.
inline Index denoiser_parameter_count(const DenoiserConfig& c) {
  auto dense = [](Index in, Index out) { return in * out + out; };
  return dense(c.n_categories, c.cond_embed_dim) + dense(c.n_items + c.cond_embed_dim, c.hidden) + dense(c.hidden, c.latent) +
         dense(c.n_items, c.hidden) + dense(c.hidden, c.latent) + dense(2 * c.latent + c.step_embed_dim, c.hidden) +
         dense(c.hidden, c.n_items) + dense(c.latent, c.n_categories);
}

}  // namespace d3rec
