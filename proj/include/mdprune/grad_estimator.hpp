#pragma once

// Gaussian-smoothing gradient estimation over pruning vectors.
//
// With v ~ N(mu, sigma^2 I), the gradient of the smoothed error is
//   grad = E[E(mu + n) n] / sigma^2,
// estimated from M samples as
//   grad ~= 1/(M sigma^2) * sum_i (E(mu + n_i) - b) n_i.
// The baseline b (mean sample error by default) leaves the expectation
// unchanged because E[n] = 0; Baseline::none gives the plain sum (scaled by 1/M).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mdprune/errors.hpp"
#include "mdprune/pruning_space.hpp"
#include "mdprune/random.hpp"

namespace mdprune {

struct GaussianPolicy {
  PruningVector mu;
  double sigma = 0.0125;
};

struct EvaluatedSample {
  std::vector<double> noise;
  double error = 0.0;
  double cost = 0.0;
  double loss = 0.0;
};

struct Schedule {
  double initial = 0.0;
  double final_value = 0.0;
  int total_steps = 1;
};

/// Linear interpolation from initial (step 0) to final (step == total_steps).
inline double schedule_value(const Schedule& s, int step) {
  if (s.total_steps < 1) throw ConfigError("schedule: total_steps must be >= 1");
  if (step < 0 || step > s.total_steps)
    throw ConfigError("schedule: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(s.total_steps) + "]");
  return s.initial + (s.final_value - s.initial) * static_cast<double>(step) / s.total_steps;
}

/// `count` i.i.d. N(0, sigma^2 I) vectors of length `dim`, drawn in order from Rng(seed).
inline std::vector<std::vector<double>> sample_noises(std::size_t dim, double sigma, int count,
                                                      std::uint64_t seed) {
  if (count < 1) throw ConfigError("sample_noises: count must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("sample_noises: sigma must be > 0");
  Rng rng(seed);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(count), std::vector<double>(dim));
  for (auto& n : out)
    for (auto& x : n) x = sigma * rng.normal();
  return out;
}

enum class Baseline { none, mean_error };

inline std::vector<double> estimate_gradient(std::span<const EvaluatedSample> samples, double sigma,
                                             Baseline baseline = Baseline::mean_error) {
  if (samples.empty()) throw ConfigError("estimate_gradient: no samples");
  if (!(sigma > 0.0)) throw ConfigError("estimate_gradient: sigma must be > 0");
  const std::size_t dim = samples.front().noise.size();
  double b = 0.0;
  if (baseline == Baseline::mean_error) {
    for (const auto& s : samples) b += s.error;
    b /= static_cast<double>(samples.size());
  }
  std::vector<double> g(dim, 0.0);
  for (const auto& s : samples) {
    if (s.noise.size() != dim) throw ShapeError("estimate_gradient: noise length mismatch");
    const double w = s.error - b;
    for (std::size_t k = 0; k < dim; ++k) g[k] += w * s.noise[k];
  }
  const double scale = 1.0 / (static_cast<double>(samples.size()) * sigma * sigma);
  for (auto& x : g) x *= scale;
  return g;
}

/// mu' = clamp(mu - alpha * gradient); sigma unchanged.
inline GaussianPolicy update_mu(const GaussianPolicy& policy, std::span<const double> gradient,
                                double alpha, const ArchitectureSpace& space) {
  if (gradient.size() != policy.mu.size()) throw ShapeError("update_mu: gradient length mismatch");
  if (!std::all_of(gradient.begin(), gradient.end(), [](double x) { return std::isfinite(x); }))
    throw NumericalFault("update_mu: non-finite gradient", -1);
  std::vector<double> e(policy.mu.values());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= alpha * gradient[i];
  return {clamp(PruningVector(std::move(e)), space), policy.sigma};
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Running maximum of |E(mu + n) - E(mu)| / ||n||, a lower bound on the
/// Lipschitz constant of the error in the pruning vector. Zero-norm noise is skipped.
class LipschitzTracker {
 public:
  LipschitzTracker() = default;
  /// Resumes from a previously reached running maximum.
  explicit LipschitzTracker(double running_max) : max_(running_max) {}

  double observe(std::span<const EvaluatedSample> samples, double error_at_mu) {
    last_ = 0.0;
    for (const auto& s : samples) {
      const double n = l2_norm(s.noise);
      if (n == 0.0) continue;
      last_ = std::max(last_, std::abs(s.error - error_at_mu) / n);
    }
    max_ = std::max(max_, last_);
    return max_;
  }

  double value() const { return max_; }
  /// Largest ratio of the most recent batch only.
  double last_batch() const { return last_; }

 private:
  double max_ = 0.0;
  double last_ = 0.0;
};

inline double lipschitz_lower_bound(std::span<const EvaluatedSample> samples, double error_at_mu) {
  LipschitzTracker t;
  return t.observe(samples, error_at_mu);
}

}  // namespace mdprune
