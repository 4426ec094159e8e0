#pragma once

// End-to-end runs from a RunConfig, and point evaluation of checkpoints.

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdprune/checkpoint.hpp"
#include "mdprune/dataset.hpp"
#include "mdprune/errors.hpp"
#include "mdprune/evaluators.hpp"
#include "mdprune/optimizer.hpp"
#include "mdprune/run_config.hpp"
#include "mdprune/trace.hpp"

namespace mdprune {

struct PipelineOptions {
  /// Continue from the checkpoint at the configured path when it exists.
  bool resume = false;
  /// Stop after this many outer steps in total (for interruption tests); -1 runs to the end.
  int stop_after = -1;
  std::function<void(const TraceRecord&)> progress;
};

struct PipelineResult {
  OptimizerResult optimizer;
  ArchitectureConfig config;
  double cost = 0.0;
  bool completed = false;
};

/// Metadata written next to the store: resume state and the run config echo.
/// The noise, subset and training draws of step t are derived from (seed, t),
/// so the seed and next step are the complete random state.
inline nlohmann::json run_metadata(const RunConfig& rc, const RunState& st) {
  const auto& o = rc.optimizer;
  return {{"next_step", st.next_step},
          {"mu", st.mu.values()},
          {"k_running_max", st.k_running_max},
          {"rng", {{"seed", o.seed}, {"next_step", st.next_step}}},
          {"sigma_schedule", {o.sigma_schedule.initial, o.sigma_schedule.final_value, o.sigma_schedule.total_steps}},
          {"alpha_schedule", {o.alpha_schedule.initial, o.alpha_schedule.final_value, o.alpha_schedule.total_steps}},
          {"run_config", rc.source_text},
          {"base_dir", rc.base_dir.string()}};
}

inline nlohmann::json architecture_json(const ArchitectureConfig& c, double cost, CostMetric metric) {
  return {{"out_channels", c.out_channels}, {"spatial", c.spatial}, {"depth", c.depth}, {"cost", cost},
          {"metric", to_string(metric)}};
}

namespace detail {

inline void require_same_space(const ArchitectureSpace& a, const ArchitectureSpace& b) {
  if (space_to_json(a) != space_to_json(b)) throw ShapeError("checkpoint space differs from the configured space");
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw ConfigError("cannot write '" + p.string() + "'");
  os << s;
  if (!os) throw Error("write to '" + p.string() + "' failed");
}

}  // namespace detail

inline PipelineResult run_pipeline(const RunConfig& rc, const PipelineOptions& opt = {}) {
  for (const auto* p : {&rc.trace_path, &rc.architecture_path, &rc.checkpoint_path})
    if (p->has_parent_path()) std::filesystem::create_directories(p->parent_path());
  const Dataset data = make_dataset(rc.data);
  SharedWeightStore store(rc.space, derive_seed(rc.optimizer.seed, streams::weights));
  RunState state;
  const RunState* resume = nullptr;
  bool append = false;
  if (opt.resume && std::filesystem::exists(rc.checkpoint_path)) {
    auto ck = load_checkpoint(rc.checkpoint_path.string());
    detail::require_same_space(ck.store.space(), rc.space);
    try {
      state.next_step = ck.metadata.at("next_step").get<int>();
      state.mu = PruningVector(ck.metadata.at("mu").get<std::vector<double>>());
      state.k_running_max = ck.metadata.at("k_running_max").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("checkpoint has no resume state: ") + e.what());
    }
    store = std::move(ck.store);
    resume = &state;
    // Keep exactly the records of completed steps.
    std::string kept;
    if (std::filesystem::exists(rc.trace_path))
      for (const auto& r : read_trace(rc.trace_path.string()).records)
        if (r.outer_step < state.next_step) kept += to_json(r).dump() + "\n";
    detail::write_text(rc.trace_path, kept);
    append = true;
  }
  TraceWriter writer(rc.trace_path.string(), append);
  SharedNetEvaluator evaluator(store, data, rc.optimizer.constraint, rc.cost_model(), rc.train, rc.eval_subset);

  struct Stop {};
  RunHooks hooks;
  hooks.on_record = [&](const TraceRecord& r) {
    writer.write(r);
    if (opt.progress) opt.progress(r);
  };
  hooks.on_step = [&](const RunState& st) {
    save_checkpoint(rc.checkpoint_path.string(), store, run_metadata(rc, st));
    if (opt.stop_after >= 0 && st.next_step >= opt.stop_after && st.next_step < rc.optimizer.outer_iterations)
      throw Stop{};
  };
  PipelineResult out;
  try {
    out.optimizer = run(rc.optimizer, rc.space, evaluator, hooks, resume);
  } catch (const Stop&) {
    return out;
  }
  out.completed = true;
  out.config = out.optimizer.config;
  out.cost = rc.cost_model()(out.config);
  detail::write_text(rc.architecture_path,
                     architecture_json(out.config, out.cost, rc.optimizer.constraint.metric).dump(2) + "\n");
  return out;
}

struct PointReport {
  ArchitectureConfig config;
  double loss = 0.0;
  double accuracy = 0.0;
  double cost = 0.0;
  double error = 0.0;
  CostMetric metric = CostMetric::flops;
};

inline nlohmann::json to_json(const PointReport& r) {
  return {{"config", config_to_json(r.config)}, {"loss", r.loss}, {"accuracy", r.accuracy}, {"cost", r.cost},
          {"error", r.error}, {"metric", to_string(r.metric)}};
}

inline RunConfig run_config_from_checkpoint(const Checkpoint& ck) {
  if (!ck.metadata.contains("run_config"))
    throw ConfigError("checkpoint carries no run config; it was not written by a run");
  auto rc = parse_run_config(ck.metadata["run_config"].get<std::string>(),
                             ck.metadata.value("base_dir", std::string(".")));
  detail::require_same_space(ck.store.space(), rc.space);
  return rc;
}

/// Loss on the full validation set, cost and penalized error of one
/// architecture with the checkpoint's weights. `rho` overrides the run's coefficient.
inline PointReport evaluate_point(const Checkpoint& ck, const ArchitectureConfig& config,
                                  std::optional<double> rho = std::nullopt) {
  const auto rc = run_config_from_checkpoint(ck);
  rc.space.check(config);
  auto constraint = rc.optimizer.constraint;
  if (rho) {
    if (!(*rho >= 0.0)) throw ConfigError("rho must be >= 0");
    constraint.rho = *rho;
  }
  const Dataset data = make_dataset(rc.data);
  const auto la = evaluate_config(ck.store, config, data.val);
  PointReport r;
  r.config = config;
  r.loss = la.loss;
  r.accuracy = la.accuracy;
  r.cost = rc.cost_model()(config);
  r.error = penalized_error(r.loss, r.cost, constraint);
  r.metric = constraint.metric;
  return r;
}

inline PointReport evaluate_point(const Checkpoint& ck, const PruningVector& v, std::optional<double> rho = std::nullopt) {
  check_vector_size(v, ck.store.space());
  const auto& space = ck.store.space();
  return evaluate_point(ck, round_to_config(clamp(v, space), space), rho);
}

}  // namespace mdprune
