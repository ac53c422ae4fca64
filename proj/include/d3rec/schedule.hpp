#pragma once

#include "d3rec/common.hpp"

#include <cmath>
#include <vector>

namespace d3rec {

struct PosteriorCoefficients {
  double c0 = 0.0;   // weight on the x0 estimate
  double ct = 0.0;   // weight on x_t
  double var = 0.0;  // sigma^2(t)
};

/// Diffusion noise schedule with 1 - alpha_bar_t linear in t. Steps are
/// 1-based; alpha_bar(0) == 1 by convention.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  NoiseSchedule(int steps, double noise_scale, double noise_min, double noise_max)
      : steps_(steps), scale_(noise_scale), min_(noise_min), max_(noise_max) {
    if (steps < 1) throw ConfigError("diffusion steps T must be >= 1");
    if (!(noise_min > 0.0) || !(noise_max >= noise_min)) throw ConfigError("need 0 < noise_min <= noise_max");
    if (!(noise_scale > 0.0)) throw ConfigError("noise_scale must be positive");
    if (!(noise_scale * noise_max < 1.0)) throw ConfigError("noise_scale * noise_max must be < 1 (alpha_bar would be <= 0)");
    alpha_bar_.resize(static_cast<std::size_t>(steps) + 1);
    alpha_.resize(alpha_bar_.size());
    alpha_bar_[0] = 1.0;
    alpha_[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
      alpha_bar_[static_cast<std::size_t>(t)] = 1.0 - noise_scale * (noise_min + frac * (noise_max - noise_min));
      alpha_[static_cast<std::size_t>(t)] = alpha_bar_[static_cast<std::size_t>(t)] / alpha_bar_[static_cast<std::size_t>(t) - 1];
    }
    for (int t = 2; t <= steps; ++t)
      if (!(alpha_bar_[static_cast<std::size_t>(t)] < alpha_bar_[static_cast<std::size_t>(t) - 1]))
        throw ConfigError("noise schedule is not strictly decreasing; need noise_min < noise_max for T > 1");
  }

  int steps() const { return steps_; }
  double noise_scale() const { return scale_; }
  double noise_min() const { return min_; }
  double noise_max() const { return max_; }

  double alpha_bar(int t) const { return alpha_bar_.at(checked(t, 0)); }
  double alpha(int t) const { return alpha_.at(checked(t, 1)); }
  double beta(int t) const { return 1.0 - alpha(t); }

  double sigma2(int t) const {
    checked(t, 1);
    return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
  }

  /// Coefficients of the Gaussian posterior q(x_{t-1} | x_t, x0).
  PosteriorCoefficients posterior(int t) const {
    checked(t, 1);
    const double ab = alpha_bar(t), ab_prev = alpha_bar(t - 1);
    return {std::sqrt(ab_prev) * beta(t) / (1.0 - ab), std::sqrt(alpha(t)) * (1.0 - ab_prev) / (1.0 - ab), sigma2(t)};
  }

  /// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise.
  template <typename Derived, typename NoiseDerived>
  auto q_sample(const Eigen::MatrixBase<Derived>& x0, int t, const Eigen::MatrixBase<NoiseDerived>& noise) const {
    checked(t, 1);
    require(x0.rows() == noise.rows() && x0.cols() == noise.cols(), "q_sample: noise shape mismatch");
    const double ab = alpha_bar(t);
    return (std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise).eval();
  }

 private:
  std::size_t checked(int t, int lowest) const {
    require(t >= lowest && t <= steps_, "diffusion step " + std::to_string(t) + " outside [" + std::to_string(lowest) +
                                            ", " + std::to_string(steps_) + "]");
    return static_cast<std::size_t>(t);
  }

  int steps_ = 0;
  double scale_ = 0.0, min_ = 0.0, max_ = 0.0;
  std::vector<double> alpha_bar_;
  std::vector<double> alpha_;
};

inline NoiseSchedule build_schedule(int steps, double noise_scale, double noise_min, double noise_max) {
  return NoiseSchedule(steps, noise_scale, noise_min, noise_max);
}

}  // namespace d3rec
