#pragma once

// Alternating optimization of weights and the pruning vector.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mdprune/cost_model.hpp"
#include "mdprune/errors.hpp"
#include "mdprune/evaluators.hpp"
#include "mdprune/grad_estimator.hpp"
#include "mdprune/pruning_space.hpp"
#include "mdprune/random.hpp"
#include "mdprune/trace.hpp"

namespace mdprune {

/// Seed streams; every stochastic draw is keyed by (seed, stream, index).
namespace streams {
inline constexpr std::uint64_t train = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t subset = 3;
inline constexpr std::uint64_t weights = 4;
}  // namespace streams

struct OptimizerConfig {
  int outer_iterations = 100;          // K
  int weight_iterations = 200;         // N
  int samples = 100;                   // M
  int vector_updates_per_outer = 20;
  Schedule sigma_schedule{0.0125, 0.0025, 100};
  Schedule alpha_schedule{0.01, 0.0, 100};
  Baseline baseline = Baseline::mean_error;
  ConstraintSpec constraint;
  std::uint64_t seed = 0;

  void validate() const {
    if (outer_iterations < 1) throw ConfigError("optimizer: outer_iterations must be >= 1");
    if (weight_iterations < 1) throw ConfigError("optimizer: weight_iterations must be >= 1");
    if (samples < 1) throw ConfigError("optimizer: samples must be >= 1");
    if (vector_updates_per_outer < 1) throw ConfigError("optimizer: vector_updates_per_outer must be >= 1");
    for (const Schedule* s : {&sigma_schedule, &alpha_schedule})
      if (s->total_steps < outer_iterations - 1 || s->total_steps < 1)
        throw ConfigError("optimizer: schedule total_steps must cover all outer steps");
    if (!(sigma_schedule.initial > 0.0) || !(sigma_schedule.final_value > 0.0))
      throw ConfigError("optimizer: sigma must be > 0");
    if (alpha_schedule.initial < 0.0 || alpha_schedule.final_value < 0.0)
      throw ConfigError("optimizer: alpha must be >= 0");
  }
};

/// Progress of an interrupted run; resuming from it continues bit-exactly
/// provided the evaluator's state (weights) is restored too.
struct RunState {
  int next_step = 0;
  PruningVector mu;
  double k_running_max = 0.0;
};

struct OptimizerResult {
  PruningVector mu;
  ArchitectureConfig config;
  std::vector<TraceRecord> trace;
};

struct RunHooks {
  /// Called with each record after it is complete.
  std::function<void(const TraceRecord&)> on_record;
  /// Called at the end of every outer step with the state to resume from.
  std::function<void(const RunState&)> on_step;
};

/// Per outer step t: train weights for N iterations under N(mu, sigma_t),
/// then vector_updates_per_outer times draw M noises, evaluate mu + n_j,
/// estimate the gradient and update mu with alpha_t. `mu0` defaults to all ones.
inline OptimizerResult run(const OptimizerConfig& cfg, const ArchitectureSpace& space, Evaluator& evaluator,
                           const RunHooks& hooks = {}, const RunState* resume = nullptr) {
  cfg.validate();
  const int U = cfg.vector_updates_per_outer;
  GaussianPolicy policy{PruningVector(std::vector<double>(space.vector_size(), 1.0)), 0.0};
  LipschitzTracker tracker;
  int start = 0;
  if (resume) {
    check_vector_size(resume->mu, space);
    if (resume->next_step < 0 || resume->next_step > cfg.outer_iterations)
      throw ConfigError("resume: step outside the run");
    policy.mu = resume->mu;
    tracker = LipschitzTracker(resume->k_running_max);
    start = resume->next_step;
  }
  OptimizerResult result;
  std::vector<EvaluatedSample> samples(static_cast<std::size_t>(cfg.samples));
  for (int t = start; t < cfg.outer_iterations; ++t) {
    TraceRecord rec;
    rec.outer_step = t;
    rec.sigma = schedule_value(cfg.sigma_schedule, t);
    rec.alpha = schedule_value(cfg.alpha_schedule, t);
    rec.metric = to_string(cfg.constraint.metric);
    rec.target = cfg.constraint.target;
    policy.sigma = rec.sigma;
    rec.train_loss = evaluator.train(policy, derive_seed(cfg.seed, streams::train, static_cast<std::uint64_t>(t)));
    for (int u = 0; u < U; ++u) {
      const auto index = static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(U) + static_cast<std::uint64_t>(u);
      evaluator.begin_update(derive_seed(cfg.seed, streams::subset, index));
      const auto noises = sample_noises(space.vector_size(), rec.sigma, cfg.samples,
                                        derive_seed(cfg.seed, streams::noise, index));
      UpdateRecord ur;
      std::vector<double> v(space.vector_size());
      for (std::size_t j = 0; j < noises.size(); ++j) {
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = policy.mu[k] + noises[j][k];
        const auto e = evaluator.evaluate(PruningVector(v));
        samples[j] = {noises[j], e.error, e.cost, e.loss};
        ur.samples.push_back({e.error, e.cost});
      }
      ur.error_at_mu = evaluator.evaluate(policy.mu).error;
      tracker.observe(samples, ur.error_at_mu);
      const auto g = estimate_gradient(samples, rec.sigma, cfg.baseline);
      ur.grad_norm = l2_norm(g);
      policy = update_mu(policy, g, rec.alpha, space);
      rec.updates.push_back(std::move(ur));
    }
    rec.grad_norm = rec.updates.back().grad_norm;
    rec.k_lower_bound = tracker.value();
    rec.mu = policy.mu.values();
    const auto full = evaluator.evaluate_full(policy.mu);
    rec.config = full.config;
    rec.cost = full.cost;
    rec.loss = full.loss;
    rec.error = full.error;
    if (hooks.on_record) hooks.on_record(rec);
    result.trace.push_back(std::move(rec));
    if (hooks.on_step) hooks.on_step(RunState{t + 1, policy.mu, tracker.value()});
  }
  result.mu = policy.mu;
  result.config = round_to_config(policy.mu, space);
  return result;
}

}  // namespace mdprune
