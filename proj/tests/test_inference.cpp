#include "d3rec/inference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace d3rec;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

double entropy_of(const Vector& p) {
  double h = 0.0;
  for (Index c = 0; c < p.size(); ++c)
    if (p[c] > 0) h -= p[c] * std::log(p[c]);
  return h;
}

// Affine stub: x0_hat = a * x_t + b * y_mean + t * 0.01, deterministic and cheap.
struct StubPredictor {
  double a = 0.7;
  double b = 0.4;
  mutable int calls = 0;
  Tensor2 operator()(const Tensor2& x, int t, const Tensor2& y) const {
    ++calls;
    Tensor2 out = a * x;
    for (Index r = 0; r < x.rows(); ++r) out.row(r).array() += b * y.row(r).sum() + 0.01 * t;
    return out;
  }
};

Tensor2 one_hot_categories(Index n_items, Index n_cat) {
  Tensor2 F = Tensor2::Zero(n_items, n_cat);
  for (Index i = 0; i < n_items; ++i) F(i, i % n_cat) = 1.0;
  return F;
}

}  // namespace

TEST(Temper, IdentityAtOne) {
  const Vector y = vec({0.5, 0.3, 0.2, 0.0});
  EXPECT_LT((temper_preference(y, 1.0) - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Temper, WorkedExample) {
  const Vector r = temper_preference(vec({0.8, 0.2, 0.0}), 2.0);
  EXPECT_NEAR(r[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r[1], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(r[2], 0.0);
}

TEST(Temper, SupportIsPreserved) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vector y(6);
    for (Index c = 0; c < 6; ++c) y[c] = u(rng) < 0.3 ? 0.0 : u(rng);
    if (y.sum() == 0) y[0] = 1;
    y /= y.sum();
    const double tau = std::exp(4 * u(rng) - 2);
    const Vector r = temper_preference(y, tau);
    EXPECT_NEAR(r.sum(), 1.0, 1e-12);
    for (Index c = 0; c < 6; ++c) EXPECT_EQ(r[c] > 0.0, y[c] > 0.0);
  }
}

TEST(Temper, EntropyNondecreasingInTau) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Vector y(5);
    for (Index c = 0; c < 5; ++c) y[c] = u(rng);
    y /= y.sum();
    const double t1 = std::exp(3 * u(rng) - 1.5), t2 = std::exp(3 * u(rng) - 1.5);
    const double lo = std::min(t1, t2), hi = std::max(t1, t2);
    EXPECT_LE(entropy_of(temper_preference(y, lo)), entropy_of(temper_preference(y, hi)) + 1e-12);
  }
}

TEST(Temper, Limits) {
  const Vector y = vec({0.6, 0.3, 0.1, 0.0});
  const Vector sharp = temper_preference(y, 1e-3);
  EXPECT_NEAR(sharp[0], 1.0, 1e-9);
  const Vector flat = temper_preference(y, 1e6);
  for (Index c = 0; c < 3; ++c) EXPECT_NEAR(flat[c], 1.0 / 3.0, 1e-5);
  EXPECT_EQ(flat[3], 0.0);
}

TEST(Temper, Contracts) {
  EXPECT_THROW(temper_preference(vec({0.5, 0.5}), 0.0), ContractViolation);
  EXPECT_THROW(temper_preference(vec({0.5, 0.5}), -1.0), ContractViolation);
  EXPECT_THROW(temper_preference(vec({0.0, 0.0}), 1.0), ContractViolation);
  EXPECT_THROW(temper_preference(vec({-0.5, 1.5}), 1.0), ContractViolation);
}

TEST(Guidance, ZeroWeightIsConditional) {
  StubPredictor p;
  const Tensor2 x = Tensor2::Constant(2, 3, 0.5), y = Tensor2::Constant(2, 2, 0.5);
  EXPECT_EQ(guided_x0(p, x, 3, y, 0.0), p(x, 3, y));
}

TEST(Guidance, MinusOneIsUnconditional) {
  StubPredictor p;
  const Tensor2 x = Tensor2::Constant(2, 3, 0.5), y = Tensor2::Constant(2, 2, 0.5);
  const Tensor2 g = guided_x0(p, x, 3, y, -1.0);
  EXPECT_LT((g - p(x, 3, Tensor2::Zero(2, 2))).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Guidance, ScalarProbe) {
  // cond = 1.5, uncond = 1.0, w = 2 -> 3 * 1.5 - 2 * 1.0 = 2.5
  auto probe = [](const Tensor2& x, int, const Tensor2& y) {
    return Tensor2::Constant(x.rows(), x.cols(), y.sum() > 0 ? 1.5 : 1.0).eval();
  };
  const Tensor2 g = guided_x0(probe, Tensor2::Zero(1, 1), 1, Tensor2::Ones(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(g(0, 0), 2.5);
}

TEST(Reverse, MatchesRecursionOracle) {
  const NoiseSchedule sched(6, 0.5, 0.01, 0.2);
  StubPredictor p;
  Tensor2 x0(2, 4);
  x0 << 1, 0, 1, 0, 0, 0, 1, 1;
  Tensor2 y(2, 2);
  y << 0.7, 0.3, 0.0, 0.0;
  for (int t_prime : {0, 2, 5}) {
    for (double w : {0.0, 1.5, -0.5}) {
      // oracle written from the posterior-mean formulas directly
      Tensor2 x = x0 * std::sqrt(t_prime > 0 ? sched.alpha_bar(t_prime) : 1.0);
      for (int t = 6; t >= 1; --t) {
        const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t - 1), a = ab / ab_prev;
        const double c0 = std::sqrt(ab_prev) * (1 - a) / (1 - ab);
        const double ct = std::sqrt(a) * (1 - ab_prev) / (1 - ab);
        const Tensor2 cond = p(x, t, y), uncond = p(x, t, Tensor2::Zero(2, 2));
        x = c0 * ((1 + w) * cond - w * uncond) + ct * x;
      }
      ReverseOptions opts;
      opts.t_prime = t_prime;
      EXPECT_LT((reverse_denoise(p, x0, sched, y, w, opts) - x).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Reverse, SingleStepCollapsesToPrediction) {
  const NoiseSchedule sched(1, 0.5, 0.01, 0.2);
  StubPredictor p;
  const Tensor2 x0 = Tensor2::Constant(1, 3, 1.0), y = Tensor2::Constant(1, 2, 0.5);
  EXPECT_LT((reverse_denoise(p, x0, sched, y, 0.0) - p(x0, 1, y)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Reverse, CallCountAndDeterminism) {
  const NoiseSchedule sched(5, 1.0, 0.05, 0.5);
  StubPredictor p;
  const Tensor2 x0 = Tensor2::Constant(1, 3, 1.0), y = Tensor2::Constant(1, 2, 0.5);
  reverse_denoise(p, x0, sched, y, 0.0);
  EXPECT_EQ(p.calls, 5);
  p.calls = 0;
  reverse_denoise(p, x0, sched, y, 1.0);
  EXPECT_EQ(p.calls, 10);

  DenoiserConfig mc;
  mc.n_items = 10;
  mc.n_categories = 2;
  mc.hidden = 6;
  mc.latent = 4;
  mc.step_embed_dim = 4;
  mc.cond_embed_dim = 4;
  const Denoiser model(mc, 3);
  const Tensor2 h = Tensor2::Constant(2, 10, 0.5), c = Tensor2::Constant(2, 2, 0.5);
  EXPECT_EQ(reverse_denoise(model, h, sched, c, 2.0), reverse_denoise(model, h, sched, c, 2.0));
  ReverseOptions noisy;
  noisy.t_prime = 2;
  noisy.corruption_noise_seed = 4;
  EXPECT_EQ(reverse_denoise(model, h, sched, c, 0.0, noisy), reverse_denoise(model, h, sched, c, 0.0, noisy));
}

TEST(Reverse, Contracts) {
  const NoiseSchedule sched(5, 1.0, 0.05, 0.5);
  StubPredictor p;
  const Tensor2 x0 = Tensor2::Constant(1, 3, 1.0), y = Tensor2::Constant(1, 2, 0.5);
  ReverseOptions opts;
  opts.t_prime = 5;
  EXPECT_THROW(reverse_denoise(p, x0, sched, y, 0.0, opts), ContractViolation);
  opts.t_prime = -1;
  EXPECT_THROW(reverse_denoise(p, x0, sched, y, 0.0, opts), ContractViolation);
  EXPECT_THROW(reverse_denoise(p, x0, sched, Tensor2::Constant(2, 2, 0.5), 0.0), ContractViolation);
}

TEST(TopK, ExampleWithMask) {
  const Tensor2 F = one_hot_categories(5, 2);
  const auto list = recommend_topk(vec({0.9, 0.1, 0.8, 0.7, 0.3}), history_mask_of({0}, 5), 2, F);
  EXPECT_EQ(list.items, (std::vector<Index>{2, 3}));
  EXPECT_EQ(list.scores, (std::vector<double>{0.8, 0.7}));
  EXPECT_NEAR(list.entropy, 1.0, 1e-12);
  EXPECT_NEAR(list.coverage, 1.0, 1e-12);
}

TEST(TopK, TiesBreakByIndexAndNanSinks) {
  const Tensor2 F = one_hot_categories(5, 2);
  const auto list = recommend_topk(vec({0.5, std::nan(""), 0.5, 0.5, 0.1}), std::vector<bool>(5, false), 4, F);
  EXPECT_EQ(list.items, (std::vector<Index>{0, 2, 3, 4}));
}

TEST(TopK, NeverReturnsHistoryAndMatchesArgsort) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Tensor2 F = one_hot_categories(40, 4);
  for (int trial = 0; trial < 100; ++trial) {
    Vector s(40);
    std::vector<bool> mask(40);
    for (Index i = 0; i < 40; ++i) {
      s[i] = std::round(u(rng) * 10) / 10;
      mask[static_cast<std::size_t>(i)] = u(rng) < 0.3;
    }
    std::vector<Index> order;
    for (Index i = 0; i < 40; ++i)
      if (!mask[static_cast<std::size_t>(i)]) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return s[a] > s[b]; });
    const Index k = std::min<Index>(10, static_cast<Index>(order.size()));
    const auto list = recommend_topk(s, mask, k, F);
    EXPECT_EQ(list.items, std::vector<Index>(order.begin(), order.begin() + k));
  }
}

TEST(TopK, KBeyondCandidatesIsRejected) {
  const Tensor2 F = one_hot_categories(5, 2);
  EXPECT_THROW(recommend_topk(Vector::Zero(5), history_mask_of({0, 1}, 5), 4, F), ContractViolation);
  EXPECT_THROW(recommend_topk(Vector::Zero(5), history_mask_of({}, 5), 0, F), ContractViolation);
  EXPECT_NO_THROW(recommend_topk(Vector::Zero(5), history_mask_of({0, 1}, 5), 3, F));
}

TEST(ResolveTarget, Precedence) {
  const Vector hist = vec({0.8, 0.2, 0.0});
  const Vector explicit_target = vec({0.0, 2.0, 2.0});
  EXPECT_LT((resolve_target(hist, explicit_target, 2.0) - vec({0, 0.5, 0.5})).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((resolve_target(hist, std::nullopt, 2.0) - vec({2.0 / 3, 1.0 / 3, 0})).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(resolve_target(Vector::Zero(3), std::nullopt, 1.0), Vector::Zero(3));
  EXPECT_THROW(resolve_target(hist, Vector(Vector::Zero(3)), 1.0), ContractViolation);
}

TEST(Pipeline, RecommendForHistoryExcludesHistory) {
  DenoiserConfig mc;
  mc.n_items = 12;
  mc.n_categories = 3;
  mc.hidden = 6;
  mc.latent = 4;
  mc.step_embed_dim = 4;
  mc.cond_embed_dim = 4;
  const Denoiser model(mc, 3);
  const NoiseSchedule sched(4, 1.0, 0.05, 0.5);
  const Tensor2 F = one_hot_categories(12, 3);
  GuidanceRequest req;
  req.history = {0, 3, 4};
  req.k = 5;
  const auto out = recommend_for_history(model, sched, F, req);
  EXPECT_EQ(out.list.items.size(), 5u);
  for (Index i : out.list.items) EXPECT_TRUE(i != 0 && i != 3 && i != 4);
  EXPECT_LT((out.applied_target - vec({2.0 / 3, 1.0 / 3, 0})).cwiseAbs().maxCoeff(), 1e-12);
}
