#pragma once

#include <memory>
#include <string>

#include "mdprune/cost_model.hpp"
#include "mdprune/latency_table.hpp"

namespace mdprune {

/// C(v): FLOPs or table latency of a concrete architecture.
class CostModel {
 public:
  static CostModel flops_model(ArchitectureSpace space) {
    CostModel m;
    m.space_ = std::move(space);
    m.metric_ = CostMetric::flops;
    return m;
  }

  static CostModel latency_model(ArchitectureSpace space, LatencyTable table) {
    CostModel m;
    m.space_ = std::move(space);
    m.metric_ = CostMetric::latency;
    m.table_ = std::make_shared<const LatencyTable>(std::move(table));
    return m;
  }

  CostMetric metric() const { return metric_; }
  const ArchitectureSpace& space() const { return space_; }

  double operator()(const ArchitectureConfig& c) const {
    if (metric_ == CostMetric::flops) return flops(c, space_);
    return latency(c, space_, *table_);
  }

 private:
  ArchitectureSpace space_;
  CostMetric metric_ = CostMetric::flops;
  std::shared_ptr<const LatencyTable> table_;
};

}  // namespace mdprune
