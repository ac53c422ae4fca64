#include "d3rec/schedule.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace d3rec;

TEST(Schedule, LinearOneMinusAlphaBar) {
  const NoiseSchedule s(5, 1.0, 0.1, 0.5);
  const double expected[] = {0.9, 0.8, 0.7, 0.6, 0.5};
  for (int t = 1; t <= 5; ++t) EXPECT_NEAR(s.alpha_bar(t), expected[t - 1], 1e-12);
  EXPECT_NEAR(s.alpha(2), 0.8 / 0.9, 1e-12);
  EXPECT_NEAR(s.alpha(2), 0.8889, 1e-4);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, SingleStep) {
  const NoiseSchedule s(1, 0.5, 0.2, 0.4);
  EXPECT_NEAR(s.alpha_bar(1), 0.9, 1e-15);
  const auto k = s.posterior(1);
  EXPECT_NEAR(k.c0, 1.0, 1e-15);
  EXPECT_EQ(k.ct, 0.0);
  EXPECT_EQ(k.var, 0.0);
}

TEST(Schedule, DefinitionalIdentities) {
  for (int T : {2, 5, 15, 40, 100}) {
    const NoiseSchedule s(T, 1e-2, 5e-4, 5e-3);
    EXPECT_EQ(s.sigma2(1), 0.0);
    for (int t = 1; t <= T; ++t) {
      EXPECT_NEAR(s.alpha_bar(t), s.alpha(t) * s.alpha_bar(t - 1), 1e-12);
      EXPECT_NEAR(s.beta(t), 1.0 - s.alpha(t), 1e-15);
      EXPECT_GT(s.beta(t), 0.0);
      EXPECT_LT(s.beta(t), 1.0);
      EXPECT_NEAR(s.sigma2(t), s.beta(t) * (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)), 1e-12);
      if (t > 1) {
        EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
      }
    }
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) prod *= s.alpha(t);
    EXPECT_NEAR(prod, s.alpha_bar(T), 1e-12);
  }
}

TEST(Schedule, PosteriorWorkedExample) {
  // Two-step schedule with alpha_bar = (0.99, 0.96).
  const NoiseSchedule s(2, 1.0, 0.01, 0.04);
  ASSERT_NEAR(s.alpha_bar(1), 0.99, 1e-15);
  ASSERT_NEAR(s.alpha_bar(2), 0.96, 1e-15);
  const auto k = s.posterior(2);
  EXPECT_NEAR(s.alpha(2), 0.9697, 1e-4);
  EXPECT_NEAR(s.beta(2), 0.0303, 1e-4);
  EXPECT_NEAR(k.c0, 0.7537, 2e-4);
  EXPECT_NEAR(k.ct, 0.2462, 1e-4);
  EXPECT_NEAR(k.var, 0.007576, 1e-6);
  // independent evaluation of the closed forms
  const double ab1 = 0.99, ab2 = 0.96, a2 = ab2 / ab1, b2 = 1 - a2;
  EXPECT_NEAR(k.c0, std::sqrt(ab1) * b2 / (1 - ab2), 1e-12);
  EXPECT_NEAR(k.ct, std::sqrt(a2) * (1 - ab1) / (1 - ab2), 1e-12);
}

TEST(Schedule, InvalidParametersRejected) {
  EXPECT_THROW(NoiseSchedule(0, 1.0, 0.1, 0.5), ConfigError);
  EXPECT_THROW(NoiseSchedule(5, 1.0, 0.0, 0.5), ConfigError);
  EXPECT_THROW(NoiseSchedule(5, 1.0, 0.5, 0.1), ConfigError);
  EXPECT_THROW(NoiseSchedule(5, 2.0, 0.1, 0.5), ConfigError);
  EXPECT_THROW(NoiseSchedule(5, -1.0, 0.1, 0.5), ConfigError);
  EXPECT_THROW(NoiseSchedule(5, 1.0, 0.3, 0.3), ConfigError);
  EXPECT_NO_THROW(NoiseSchedule(1, 1.0, 0.3, 0.3));
}

TEST(Schedule, OutOfRangeStep) {
  const NoiseSchedule s(5, 1.0, 0.1, 0.5);
  EXPECT_THROW(s.alpha(0), ContractViolation);
  EXPECT_THROW(s.posterior(6), ContractViolation);
  const Vector x = Vector::Ones(3);
  EXPECT_THROW(s.q_sample(x, 0, x), ContractViolation);
  EXPECT_THROW(s.q_sample(x, 6, x), ContractViolation);
}

TEST(QSample, WorkedExample) {
  // alpha_bar = 0.96 at t = 1
  const NoiseSchedule s(1, 1.0, 0.04, 0.04);
  Vector x0(1), noise(1);
  x0 << 1.0;
  noise << 0.5;
  EXPECT_NEAR(s.q_sample(x0, 1, noise)[0], std::sqrt(0.96) + 0.2 * 0.5, 1e-12);
  EXPECT_NEAR(s.q_sample(x0, 1, noise)[0], 1.0798, 1e-4);
  noise << 0.0;
  EXPECT_NEAR(s.q_sample(x0, 1, noise)[0], std::sqrt(0.96), 1e-15);
}

TEST(QSample, AffineInBothArguments) {
  const NoiseSchedule s(10, 1.0, 0.05, 0.5);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  auto rand_vec = [&] {
    Vector v(17);
    for (auto& e : v) e = n(rng);
    return v;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const int t = 1 + trial % 10;
    const Vector a = rand_vec(), b = rand_vec(), e1 = rand_vec(), e2 = rand_vec();
    const double p = n(rng), q = n(rng);
    const Vector lhs = s.q_sample(Vector(p * a + q * b), t, Vector(p * e1 + q * e2));
    const Vector rhs = p * s.q_sample(a, t, e1) + q * s.q_sample(b, t, e2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(QSample, MonteCarloMoments) {
  const NoiseSchedule s(15, 1.0, 0.05, 0.5);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t : {1, 8, 15}) {
    Vector x0(1), noise(1);
    x0 << 1.0;
    const int draws = 100000;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < draws; ++k) {
      noise << n(rng);
      const double v = s.q_sample(x0, t, noise)[0];
      sum += v;
      sq += v * v;
    }
    const double mean = sum / draws, sd = std::sqrt(sq / draws - mean * mean);
    EXPECT_NEAR(mean, std::sqrt(s.alpha_bar(t)), 0.01 * std::sqrt(s.alpha_bar(t)));
    EXPECT_NEAR(sd, std::sqrt(1 - s.alpha_bar(t)), 0.01 * std::sqrt(1 - s.alpha_bar(t)));
  }
}

TEST(Posterior, LinearInInputs) {
  const NoiseSchedule s(6, 1.0, 0.05, 0.5);
  for (int t = 1; t <= 6; ++t) {
    const auto k = s.posterior(t);
    const double mu = k.c0 * 0.3 + k.ct * 0.7;
    EXPECT_NEAR(k.c0 * 0.6 + k.ct * 1.4, 2 * mu, 1e-15);
  }
}
