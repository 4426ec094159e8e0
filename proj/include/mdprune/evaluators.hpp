#pragma once

// Error functions the optimizer can drive: closed-form landscapes for
// oracle testing, and the shared-weight network.

#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "mdprune/cost_model.hpp"
#include "mdprune/dataset.hpp"
#include "mdprune/errors.hpp"
#include "mdprune/grad_estimator.hpp"
#include "mdprune/pruning_space.hpp"
#include "mdprune/random.hpp"
#include "mdprune/resource_cost.hpp"
#include "mdprune/trainer.hpp"

namespace mdprune {

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  /// Weight phase of an outer step; returns the mean training loss.
  virtual double train(const GaussianPolicy& /*policy*/, std::uint64_t /*seed*/) { return 0.0; }
  /// Starts a vector update. Evaluations until the next call share one
  /// validation subset drawn from `seed`.
  virtual void begin_update(std::uint64_t /*seed*/) {}
  /// Error of a pruning vector within the current update.
  virtual Evaluation evaluate(const PruningVector& v) = 0;
  /// Error of a pruning vector on the full validation data.
  virtual Evaluation evaluate_full(const PruningVector& v) { return evaluate(v); }
};

enum class EvaluatorKind { shared_net, analytic };

inline EvaluatorKind parse_evaluator_kind(const std::string& s) {
  if (s == "shared_net") return EvaluatorKind::shared_net;
  if (s == "analytic") return EvaluatorKind::analytic;
  throw ConfigError("unknown evaluator kind '" + s + "'");
}

/// E(v) = ||v - center||^2 + rho * (c . v - target)^2 on the raw vector
/// (no clamping); `cost` is c . v.
class QuadraticEvaluator : public Evaluator {
 public:
  QuadraticEvaluator(ArchitectureSpace space, std::vector<double> center, std::vector<double> cost_weights,
                     double target, double rho)
      : space_(std::move(space)), center_(std::move(center)), c_(std::move(cost_weights)), target_(target), rho_(rho) {
    if (center_.size() != space_.vector_size() || c_.size() != center_.size())
      throw ShapeError("quadratic evaluator: length mismatch");
  }

  double value(const PruningVector& v) const {
    double q = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) q += (v[i] - center_[i]) * (v[i] - center_[i]);
    const double d = cost(v) - target_;
    return q + rho_ * d * d;
  }

  double cost(const PruningVector& v) const {
    check_vector_size(v, space_);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += c_[i] * v[i];
    return s;
  }

  /// Minimizer over vectors whose tied entries are equal, ignoring box bounds.
  /// A group G with shared value x contributes |G| (x - m_G)^2 (m_G the mean
  /// of its centers) and C_G x to the cost, C_G = sum of its weights, so
  /// x = m - rho (C.m - target) W^-1 C / (1 + rho C^T W^-1 C), W = diag(|G|).
  std::vector<double> optimum() const {
    std::vector<std::vector<std::size_t>> groups;
    std::vector<bool> seen(center_.size(), false);
    for (const auto& g : space_.tie_groups()) {
      groups.emplace_back();
      for (int i : g) groups.back().push_back(static_cast<std::size_t>(i)), seen[static_cast<std::size_t>(i)] = true;
    }
    for (std::size_t i = 0; i < center_.size(); ++i)
      if (!seen[i]) groups.push_back({i});
    std::vector<double> m(groups.size()), C(groups.size()), w(groups.size());
    double cm = 0.0, cwc = 0.0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
      for (std::size_t i : groups[k]) m[k] += center_[i], C[k] += c_[i];
      w[k] = static_cast<double>(groups[k].size());
      m[k] /= w[k];
      cm += C[k] * m[k];
      cwc += C[k] * C[k] / w[k];
    }
    const double s = rho_ * (cm - target_) / (1.0 + rho_ * cwc);
    std::vector<double> v(center_.size());
    for (std::size_t k = 0; k < groups.size(); ++k)
      for (std::size_t i : groups[k]) v[i] = m[k] - s * C[k] / w[k];
    return v;
  }

  Evaluation evaluate(const PruningVector& v) override {
    Evaluation e;
    e.config = round_to_config(clamp(v, space_), space_);
    e.cost = cost(v);
    e.error = value(v);
    e.loss = e.error - rho_ * (e.cost - target_) * (e.cost - target_);
    return e;
  }

 private:
  ArchitectureSpace space_;
  std::vector<double> center_, c_;
  double target_, rho_;
};

/// E(v) = a . v + e0, zero cost.
class LinearEvaluator : public Evaluator {
 public:
  LinearEvaluator(ArchitectureSpace space, std::vector<double> a, double e0)
      : space_(std::move(space)), a_(std::move(a)), e0_(e0) {
    if (a_.size() != space_.vector_size()) throw ShapeError("linear evaluator: length mismatch");
  }

  double value(const PruningVector& v) const {
    check_vector_size(v, space_);
    double s = e0_;
    for (std::size_t i = 0; i < v.size(); ++i) s += a_[i] * v[i];
    return s;
  }

  Evaluation evaluate(const PruningVector& v) override {
    Evaluation e;
    e.config = round_to_config(clamp(v, space_), space_);
    e.loss = e.error = value(v);
    return e;
  }

 private:
  ArchitectureSpace space_;
  std::vector<double> a_;
  double e0_;
};

/// Binds train_inner and evaluate_error to a store and data set. Within one
/// vector update the weights and validation subset are fixed, so results are
/// memoized per rounded architecture.
class SharedNetEvaluator : public Evaluator {
 public:
  SharedNetEvaluator(SharedWeightStore& store, const Dataset& data, ConstraintSpec constraint, CostModel cost,
                     TrainParams train, int eval_subset)
      : store_(&store), data_(&data), constraint_(constraint), cost_(std::move(cost)), train_(train),
        eval_subset_(eval_subset) {
    if (eval_subset_ < 1) throw ConfigError("eval_subset must be >= 1");
    if (data.val.count < 1) throw ConfigError("validation set is empty");
  }

  double train(const GaussianPolicy& policy, std::uint64_t seed) override {
    cache_.clear();
    subset_.count = 0;
    return train_inner(*store_, policy, data_->train, train_, seed);
  }

  void begin_update(std::uint64_t seed) override {
    cache_.clear();
    std::vector<std::size_t> idx(static_cast<std::size_t>(data_->val.count));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (eval_subset_ < data_->val.count) {
      Rng rng(seed);
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(static_cast<std::size_t>(eval_subset_));
    }
    subset_ = take(data_->val, idx);
  }

  Evaluation evaluate(const PruningVector& v) override {
    if (subset_.count == 0) throw Error("shared-net evaluator: begin_update not called");
    const auto& space = store_->space();
    const auto config = round_to_config(clamp(v, space), space);
    auto it = cache_.find(config);
    if (it == cache_.end()) it = cache_.emplace(config, evaluate_error(*store_, v, subset_, constraint_, cost_)).first;
    return it->second;
  }

  Evaluation evaluate_full(const PruningVector& v) override {
    return evaluate_error(*store_, v, data_->val, constraint_, cost_);
  }

  const SharedWeightStore& store() const { return *store_; }
  std::size_t cached_configs() const { return cache_.size(); }

 private:
  SharedWeightStore* store_;
  const Dataset* data_;
  ConstraintSpec constraint_;
  CostModel cost_;
  TrainParams train_;
  int eval_subset_;
  Batch subset_;
  std::map<ArchitectureConfig, Evaluation> cache_;
};

}  // namespace mdprune
