#pragma once

// Plot data from a trace, one CSV per figure:
//
//   pruning_ratio.csv  outer_step, layer_0 .. layer_{L-1}, spatial, depth   (mu entries)
//   cost.csv           outer_step, cost, target, relative_gap, loss, error,
//                      sample_cost_mean, sample_cost_std
//   k_bound.csv        outer_step, k_lower_bound, grad_norm
//   architecture.csv   item, value   (final record: per-layer channels, spatial, depth, cost)
//
// The first three have one row per trace record. sample_cost_std is the
// standard deviation of the sampled costs within a vector update, averaged
// over the step's updates.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mdprune/errors.hpp"
#include "mdprune/trace.hpp"

namespace mdprune {

struct ReportSummary {
  std::size_t rows = 0;
  bool truncated = false;
  std::string warning;
  std::vector<std::string> files;
};

namespace detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace detail

/// Mean over updates of the within-update standard deviation of sampled costs.
inline double sample_cost_spread(const TraceRecord& r) {
  if (r.updates.empty()) return 0.0;
  double total = 0.0;
  for (const auto& u : r.updates) {
    std::vector<double> c;
    for (const auto& s : u.samples) c.push_back(s.cost);
    double m = 0.0, sd = 0.0;
    detail::mean_std(c, m, sd);
    total += sd;
  }
  return total / static_cast<double>(r.updates.size());
}

inline ReportSummary write_report(const TraceFile& trace, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  ReportSummary s;
  s.rows = trace.records.size();
  s.truncated = trace.truncated;
  if (trace.truncated)
    s.warning = "trace truncated at line " + std::to_string(trace.bad_line) + " (" + trace.problem + "); reporting " +
                std::to_string(trace.records.size()) + " complete records";
  auto open = [&](const std::string& name) {
    const auto p = out_dir / name;
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw ConfigError("cannot write '" + p.string() + "'");
    s.files.push_back(p.string());
    return os;
  };

  const std::size_t dim = trace.records.empty() ? 2 : trace.records.front().mu.size();
  {
    auto os = open("pruning_ratio.csv");
    os << "outer_step";
    for (std::size_t i = 0; i + 2 < dim; ++i) os << ",layer_" << i;
    os << ",spatial,depth\n";
    for (const auto& r : trace.records) {
      if (r.mu.size() != dim) throw ConfigError("trace: mu length changes at step " + std::to_string(r.outer_step));
      os << r.outer_step;
      for (double x : r.mu) os << ',' << detail::fmt(x);
      os << '\n';
    }
  }
  {
    auto os = open("cost.csv");
    os << "outer_step,cost,target,relative_gap,loss,error,sample_cost_mean,sample_cost_std\n";
    for (const auto& r : trace.records) {
      std::vector<double> all;
      for (const auto& u : r.updates)
        for (const auto& x : u.samples) all.push_back(x.cost);
      double m = 0.0, sd = 0.0;
      detail::mean_std(all, m, sd);
      const double gap = r.target != 0.0 ? (r.cost - r.target) / r.target : 0.0;
      os << r.outer_step << ',' << detail::fmt(r.cost) << ',' << detail::fmt(r.target) << ',' << detail::fmt(gap) << ','
         << detail::fmt(r.loss) << ',' << detail::fmt(r.error) << ',' << detail::fmt(m) << ','
         << detail::fmt(sample_cost_spread(r)) << '\n';
    }
  }
  {
    auto os = open("k_bound.csv");
    os << "outer_step,k_lower_bound,grad_norm\n";
    for (const auto& r : trace.records)
      os << r.outer_step << ',' << detail::fmt(r.k_lower_bound) << ',' << detail::fmt(r.grad_norm) << '\n';
  }
  {
    auto os = open("architecture.csv");
    os << "item,value\n";
    if (!trace.records.empty()) {
      const auto& r = trace.records.back();
      for (std::size_t i = 0; i < r.config.out_channels.size(); ++i)
        os << "layer_" << i << ',' << r.config.out_channels[i] << '\n';
      os << "spatial," << r.config.spatial << '\n';
      os << "depth," << r.config.depth << '\n';
      os << "cost," << detail::fmt(r.cost) << '\n';
    }
  }
  return s;
}

}  // namespace mdprune
