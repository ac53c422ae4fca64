#include "d3rec/denoiser.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace d3rec;

namespace {

DenoiserConfig tiny() {
  DenoiserConfig c;
  c.n_items = 12;
  c.n_categories = 3;
  c.hidden = 8;
  c.latent = 4;
  c.step_embed_dim = 4;
  c.cond_embed_dim = 4;
  c.dropout = 0.2;
  return c;
}

Tensor2 random_matrix(Index r, Index c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor2 m(r, c);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

Tensor2 simplex_rows(Index r, Index c, std::uint64_t seed) {
  Tensor2 m = random_matrix(r, c, seed, 0.01, 1.0);
  for (Index k = 0; k < r; ++k) m.row(k) /= m.row(k).sum();
  return m;
}

}  // namespace

TEST(TimestepEmbedding, ZeroStepAlternates) {
  const Vector e = timestep_embedding(0.0, 8);
  for (Index k = 0; k < 8; ++k) EXPECT_EQ(e[k], k % 2 == 0 ? 0.0 : 1.0);
}

TEST(TimestepEmbedding, BoundedAndDistinct) {
  const int T = 100;
  std::vector<Vector> es;
  for (int t = 1; t <= T; ++t) {
    es.push_back(timestep_embedding(t, 16));
    EXPECT_LE(es.back().cwiseAbs().maxCoeff(), 1.0);
  }
  double min_dist = 1e9;
  for (int a = 0; a < T; ++a)
    for (int b = a + 1; b < T; ++b) min_dist = std::min(min_dist, (es[a] - es[b]).norm());
  EXPECT_GT(min_dist, 0.0);
}

TEST(TimestepEmbedding, FrequencyLayout) {
  const Vector e = timestep_embedding(3.0, 4);
  EXPECT_NEAR(e[0], std::sin(3.0), 1e-15);
  EXPECT_NEAR(e[1], std::cos(3.0), 1e-15);
  EXPECT_NEAR(e[2], std::sin(3.0 * 0.01), 1e-15);
  EXPECT_NEAR(e[3], std::cos(3.0 * 0.01), 1e-15);
}

TEST(TimestepEmbedding, OddDimensionRejected) { EXPECT_THROW(timestep_embedding(1, 5), ConfigError); }

TEST(Denoiser, ParameterCountPinned) {
  const DenoiserConfig c = tiny();
  // cond 3*4+4, aware (16*8+8)+(8*4+4), agnostic (12*8+8)+(8*4+4),
  // decoder (12*8+8)+(8*12+12), head 4*3+3
  EXPECT_EQ(denoiser_parameter_count(c), 555);
  const Denoiser d(c, 1);
  EXPECT_EQ(d.params().total_count(), 555);
}

TEST(Denoiser, ParameterOrderFixed) {
  const Denoiser d(tiny(), 1);
  const std::vector<std::string> expected = {
      "cond_embed.weight",      "cond_embed.bias",      "aware.hidden.weight",   "aware.hidden.bias",
      "aware.latent.weight",    "aware.latent.bias",    "agnostic.hidden.weight", "agnostic.hidden.bias",
      "agnostic.latent.weight", "agnostic.latent.bias", "decoder.hidden.weight", "decoder.hidden.bias",
      "decoder.out.weight",     "decoder.out.bias",     "category_head.weight",  "category_head.bias"};
  ASSERT_EQ(d.params().size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_EQ(d.params()[k].name, expected[k]);
}

TEST(Denoiser, InitDeterministicXavierZeroBias) {
  const Denoiser a(tiny(), 5), b(tiny(), 5), c(tiny(), 6);
  EXPECT_EQ(a.params().flatten(), b.params().flatten());
  EXPECT_NE(a.params().flatten(), c.params().flatten());
  for (const auto& p : a.params()) {
    if (p.name.ends_with(".bias")) {
      EXPECT_EQ(p.value.cwiseAbs().maxCoeff(), 0.0);
    } else {
      const double mean = p.value.mean();
      EXPECT_GT((p.value.array() - mean).square().mean(), 0.0) << p.name;
    }
  }
}

TEST(Denoiser, OutputShapesAndUnconditionalToken) {
  const DenoiserConfig c = tiny();
  const Denoiser d(c, 2);
  const Tensor2 x = random_matrix(5, c.n_items, 3);
  const DenoiserOutput out = d.forward(x, {1, 2, 3, 4, 5}, Tensor2::Zero(5, c.n_categories), false, 0);
  EXPECT_EQ(out.x0_hat.rows(), 5);
  EXPECT_EQ(out.x0_hat.cols(), c.n_items);
  EXPECT_EQ(out.z_aware.cols(), c.latent);
  EXPECT_EQ(out.z_agnostic.cols(), c.latent);
  EXPECT_EQ(out.cate_logits.cols(), c.n_categories);
  EXPECT_TRUE(out.x0_hat.allFinite());
}

TEST(Denoiser, EvalModeIsPure) {
  const DenoiserConfig c = tiny();
  const Denoiser d(c, 2);
  const Tensor2 x = random_matrix(3, c.n_items, 4);
  const Tensor2 y = simplex_rows(3, c.n_categories, 5);
  const DenoiserOutput a = d.forward(x, {2, 2, 2}, y, false, 1);
  const DenoiserOutput b = d.forward(x, {2, 2, 2}, y, false, 999);
  EXPECT_EQ(a.x0_hat, b.x0_hat);
  EXPECT_EQ(a.cate_logits, b.cate_logits);
}

TEST(Denoiser, TrainModeDropoutIsSeeded) {
  const DenoiserConfig c = tiny();
  const Denoiser d(c, 2);
  const Tensor2 x = random_matrix(3, c.n_items, 4);
  const Tensor2 y = simplex_rows(3, c.n_categories, 5);
  const Tensor2 a = d.forward(x, {2, 2, 2}, y, true, 1).x0_hat;
  EXPECT_EQ(a, d.forward(x, {2, 2, 2}, y, true, 1).x0_hat);
  EXPECT_NE(a, d.forward(x, {2, 2, 2}, y, true, 2).x0_hat);
  EXPECT_NE(a, d.forward(x, {2, 2, 2}, y, false, 1).x0_hat);
}

TEST(Denoiser, ZeroedConditionEmbeddingRemovesConditionDependence) {
  const DenoiserConfig c = tiny();
  Denoiser d(c, 8);
  d.params().at("cond_embed.weight").value.setZero();
  d.params().touch();
  const Tensor2 x = random_matrix(4, c.n_items, 9);
  const Tensor2 base = d.predict(x, 3, Tensor2::Zero(4, c.n_categories));
  for (std::uint64_t s = 0; s < 10; ++s) EXPECT_EQ((d.predict(x, 3, simplex_rows(4, c.n_categories, s)) - base).cwiseAbs().maxCoeff(), 0.0);

  const Denoiser live(c, 8);
  EXPECT_GT((live.predict(x, 3, simplex_rows(4, c.n_categories, 1)) - live.predict(x, 3, Tensor2::Zero(4, c.n_categories)))
                .cwiseAbs()
                .maxCoeff(),
            0.0);
}

TEST(Denoiser, ContractChecks) {
  const DenoiserConfig c = tiny();
  const Denoiser d(c, 1);
  Tensor2 y = Tensor2::Zero(1, c.n_categories);
  y(0, 1) = -0.1;
  EXPECT_THROW(d.predict(Tensor2::Zero(1, c.n_items), 1, y), ContractViolation);
  EXPECT_THROW(d.predict(Tensor2::Zero(1, c.n_items + 1), 1, Tensor2::Zero(1, c.n_categories)), ContractViolation);
  EXPECT_THROW(d.forward(Tensor2::Zero(2, c.n_items), {1}, Tensor2::Zero(2, c.n_categories), false, 0), ContractViolation);
}

TEST(Denoiser, ConfigValidation) {
  DenoiserConfig c = tiny();
  c.latent = 9;
  EXPECT_THROW(Denoiser(c, 1), ConfigError);
  c = tiny();
  c.dropout = 1.0;
  EXPECT_THROW(Denoiser(c, 1), ConfigError);
  c = tiny();
  c.step_embed_dim = 3;
  EXPECT_THROW(Denoiser(c, 1), ConfigError);
}

TEST(Denoiser, BackwardMatchesFiniteDifferences) {
  const DenoiserConfig c = tiny();
  Denoiser d(c, 4);
  const Tensor2 x = random_matrix(3, c.n_items, 10, -1, 1);
  const Tensor2 y = simplex_rows(3, c.n_categories, 11);
  const std::vector<int> steps = {1, 4, 9};
  const Tensor2 rx = random_matrix(3, c.n_items, 12, -1, 1), rz = random_matrix(3, c.latent, 13, -1, 1),
                rg = random_matrix(3, c.latent, 14, -1, 1), rl = random_matrix(3, c.n_categories, 15, -1, 1);
  // linear probe loss: sum of <R, output> over all four heads
  auto loss = [&](const ParamStore& p) {
    Denoiser probe(c, std::span<const double>(p.flatten()));
    const auto o = probe.forward(x, steps, y, true, 77);
    return (o.x0_hat.cwiseProduct(rx)).sum() + (o.z_aware.cwiseProduct(rz)).sum() + (o.z_agnostic.cwiseProduct(rg)).sum() +
           (o.cate_logits.cwiseProduct(rl)).sum();
  };
  DenoiserCache cache;
  d.forward(x, steps, y, true, 77, &cache);
  d.params().zero_grad();
  d.backward({rx, rz, rg, rl}, cache);
  GradCheckOptions opts;
  opts.max_entries_per_tensor = 1000;
  opts.abs_floor = 1e-6;
  const auto r = gradient_check(loss, d.params(), opts);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst_param << "[" << r.worst_index << "]";
  EXPECT_EQ(r.entries_checked, 555u);
}
