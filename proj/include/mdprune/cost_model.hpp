#pragma once

// Resource cost of an architecture and the constraint penalty folded into the
// error function. FLOPs are multiply-accumulates of the forward pass: biases,
// ReLUs and pooling are not counted, padded taps are.

#include <cmath>
#include <string>
#include <vector>

#include "mdprune/errors.hpp"
#include "mdprune/pruning_space.hpp"

namespace mdprune {

/// Per-layer shape of an active layer under a concrete config.
struct LayerCostSpec {
  std::size_t layer_id = 0;
  LayerKind kind = LayerKind::conv;
  int kernel = 1;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  int spatial_in = 1;
  int spatial_out = 1;
};

inline std::vector<LayerCostSpec> layer_cost_specs(const ArchitectureConfig& config,
                                                   const ArchitectureSpace& space) {
  if (config.out_channels.size() != space.num_layers())
    throw ShapeError("config/space layer count mismatch");
  const auto in_c = layer_input_channels(config, space);
  const auto in_s = layer_input_spatial(config, space);
  std::vector<LayerCostSpec> out;
  for (std::size_t i : active_layers(config, space)) {
    const auto& l = space.layer(i);
    LayerCostSpec c;
    c.layer_id = i;
    c.kind = l.kind;
    c.kernel = l.kind == LayerKind::dense ? 1 : l.kernel;
    c.stride = l.stride;
    c.in_channels = in_c[i];
    c.out_channels = config.out_channels[i];
    c.spatial_in = in_s[i];
    c.spatial_out = l.kind == LayerKind::dense
                        ? 1
                        : (in_s[i] + 2 * (l.kernel / 2) - l.kernel) / l.stride + 1;
    out.push_back(c);
  }
  return out;
}

inline double layer_flops(const LayerCostSpec& l) {
  const double hw = static_cast<double>(l.spatial_out) * l.spatial_out;
  const double kk = static_cast<double>(l.kernel) * l.kernel;
  switch (l.kind) {
    case LayerKind::conv: return kk * l.in_channels * l.out_channels * hw;
    case LayerKind::depthwise_conv: return kk * l.out_channels * hw;
    case LayerKind::dense: return static_cast<double>(l.in_channels) * l.out_channels;
  }
  throw ConfigError("unknown layer kind");
}

/// Multiply-accumulate count of the active layers.
inline double flops(const ArchitectureConfig& config, const ArchitectureSpace& space) {
  double total = 0.0;
  for (const auto& l : layer_cost_specs(config, space)) total += layer_flops(l);
  return total;
}

enum class CostMetric { flops, latency };

/// Where the regularization coefficient enters the squared deviation.
enum class PenaltyForm {
  /// rho * (unit * (cost - target))^2
  coefficient_outside,
  /// (rho * unit * (cost - target))^2, the form behind the reported initial FLOPs losses
  coefficient_inside,
};

struct ConstraintSpec {
  CostMetric metric = CostMetric::flops;
  double target = 1.0;  // FLOPs or microseconds
  double rho = 1.0;
  PenaltyForm form = PenaltyForm::coefficient_outside;
  /// Scale applied to (cost - target) before squaring, e.g. 1e-9 for GFLOPs.
  double cost_unit = 1.0;

  void validate() const {
    if (!(target > 0.0)) throw ConfigError("constraint: target must be > 0");
    if (!(rho > 0.0)) throw ConfigError("constraint: rho must be > 0");
    if (!(cost_unit > 0.0)) throw ConfigError("constraint: cost_unit must be > 0");
  }
};

inline double constraint_penalty(double cost, const ConstraintSpec& c) {
  const double d = c.cost_unit * (cost - c.target);
  if (c.form == PenaltyForm::coefficient_inside) return (c.rho * d) * (c.rho * d);
  return c.rho * d * d;
}

/// loss + rho * ||cost - target||^2 (form per ConstraintSpec::form).
inline double penalized_error(double loss, double cost, const ConstraintSpec& c) {
  return loss + constraint_penalty(cost, c);
}

/// Coefficient that makes the penalty at `initial_cost` equal `penalty`.
inline double rho_for_initial_penalty(double initial_cost, const ConstraintSpec& c, double penalty) {
  const double d = std::abs(c.cost_unit * (initial_cost - c.target));
  if (d == 0.0) throw ConfigError("constraint: initial cost equals target, rho is undetermined");
  if (c.form == PenaltyForm::coefficient_inside) return std::sqrt(penalty) / d;
  return penalty / (d * d);
}

inline const char* to_string(CostMetric m) { return m == CostMetric::flops ? "flops" : "latency"; }

}  // namespace mdprune
