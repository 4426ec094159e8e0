#pragma once

// Pruning vectors, the architecture space they live in, and the mapping
// between normalized vectors and concrete integer architectures.
//
// A vector has one entry per layer (output channels), then the input
// resolution, then the number of droppable blocks kept. Each entry is the
// integer value divided by its maximum, so the maximal network is all-ones.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mdprune/errors.hpp"

namespace mdprune {

enum class LayerKind { conv, depthwise_conv, dense };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::depthwise_conv: return "depthwise_conv";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "depthwise_conv" || s == "dwconv") return LayerKind::depthwise_conv;
  if (s == "dense") return LayerKind::dense;
  throw ConfigError("unknown layer kind '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int kernel = 3;  // per side; ignored for dense
  int stride = 1;
  int max_in_channels = 1;
  int max_out_channels = 1;
  int min_out_channels = 1;
  bool has_relu = true;
  int block_id = 0;  // layers whose block is not droppable are mandatory
};

/// Half-away-from-zero rounding to int.
inline int round_half_away(double x) { return static_cast<int>(std::round(x)); }

/// Smallest admissible channel count when the space does not specify one.
inline int default_min_channels(int max_channels) {
  return std::max(1, static_cast<int>(std::ceil(0.1 * max_channels - 1e-12)));
}

inline int default_spatial_min(int spatial_max) {
  return static_cast<int>(std::ceil(0.25 * spatial_max - 1e-12));
}

struct ArchitectureConfig {
  std::vector<int> out_channels;
  int spatial = 0;
  int depth = 0;

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
  friend auto operator<=>(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

/// Normalized pruning vector (c_1/c_1max, ..., c_L/c_Lmax, s/s_max, d/d_max).
class PruningVector {
 public:
  PruningVector() = default;
  explicit PruningVector(std::vector<double> entries) : entries_(std::move(entries)) {}

  std::size_t size() const { return entries_.size(); }
  double& operator[](std::size_t i) { return entries_[i]; }
  double operator[](std::size_t i) const { return entries_[i]; }
  std::span<const double> entries() const { return entries_; }
  std::span<double> entries() { return entries_; }
  const std::vector<double>& values() const { return entries_; }

  friend bool operator==(const PruningVector&, const PruningVector&) = default;

 private:
  std::vector<double> entries_;
};

class ArchitectureSpace {
 public:
  ArchitectureSpace() = default;

  /// Validates every invariant; throws ConfigError on the first violation.
  ArchitectureSpace(std::vector<LayerSpec> layers, std::vector<std::vector<int>> tie_groups,
                    std::vector<int> droppable_blocks, int spatial_max, int spatial_min,
                    int min_depth, int input_channels)
      : layers_(std::move(layers)),
        tie_groups_(std::move(tie_groups)),
        droppable_(std::move(droppable_blocks)),
        spatial_max_(spatial_max),
        spatial_min_(spatial_min),
        min_depth_(min_depth),
        input_channels_(input_channels) {
    validate();
    group_of_.assign(layers_.size(), -1);
    for (std::size_t g = 0; g < tie_groups_.size(); ++g)
      for (int i : tie_groups_[g]) group_of_[static_cast<std::size_t>(i)] = static_cast<int>(g);
    even_spatial_ = std::any_of(layers_.begin(), layers_.end(), [](const LayerSpec& l) {
      return l.kind != LayerKind::dense && l.stride > 1;
    });
    if (even_spatial_) {
      spatial_lo_ = spatial_min_ + (spatial_min_ % 2);
      spatial_hi_ = spatial_max_ - (spatial_max_ % 2);
      if (spatial_lo_ > spatial_hi_)
        throw ConfigError("space: no even spatial size in [spatial_min, spatial_max]");
    } else {
      spatial_lo_ = spatial_min_;
      spatial_hi_ = spatial_max_;
    }
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const LayerSpec& layer(std::size_t i) const { return layers_[i]; }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<std::vector<int>>& tie_groups() const { return tie_groups_; }
  const std::vector<int>& droppable_blocks() const { return droppable_; }
  int spatial_max() const { return spatial_max_; }
  int spatial_min() const { return spatial_min_; }
  int max_depth() const { return static_cast<int>(droppable_.size()); }
  int min_depth() const { return min_depth_; }
  int input_channels() const { return input_channels_; }
  bool even_spatial() const { return even_spatial_; }
  /// Tie group index of a layer, or -1.
  int tie_group_of(std::size_t layer) const { return group_of_[layer]; }

  /// L + 2.
  std::size_t vector_size() const { return layers_.size() + 2; }
  std::size_t spatial_index() const { return layers_.size(); }
  std::size_t depth_index() const { return layers_.size() + 1; }

  /// Integer maximum behind each vector entry.
  double entry_max(std::size_t i) const {
    if (i < layers_.size()) return layers_[i].max_out_channels;
    if (i == spatial_index()) return spatial_max_;
    return std::max(1, max_depth());
  }

  /// Normalized lower bound of each vector entry.
  double entry_lower_bound(std::size_t i) const {
    if (i < layers_.size())
      return static_cast<double>(layers_[i].min_out_channels) / layers_[i].max_out_channels;
    if (i == spatial_index()) return static_cast<double>(spatial_min_) / spatial_max_;
    if (max_depth() == 0) return 1.0;
    return static_cast<double>(min_depth_) / max_depth();
  }

  bool is_droppable(int block_id) const {
    return std::find(droppable_.begin(), droppable_.end(), block_id) != droppable_.end();
  }

  ArchitectureConfig maximal_config() const {
    ArchitectureConfig c;
    for (const auto& l : layers_) c.out_channels.push_back(l.max_out_channels);
    c.spatial = spatial_hi_;
    c.depth = max_depth();
    return c;
  }

  /// Throws ShapeError/ConfigError if the config breaks an invariant of this space.
  void check(const ArchitectureConfig& c) const {
    if (c.out_channels.size() != layers_.size())
      throw ShapeError("config has " + std::to_string(c.out_channels.size()) +
                       " layers, space has " + std::to_string(layers_.size()));
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (c.out_channels[i] < layers_[i].min_out_channels ||
          c.out_channels[i] > layers_[i].max_out_channels)
        throw ConfigError("layer " + std::to_string(i) + ": out_channels " +
                          std::to_string(c.out_channels[i]) + " out of range");
    }
    for (const auto& g : tie_groups_)
      for (int i : g)
        if (c.out_channels[static_cast<std::size_t>(i)] !=
            c.out_channels[static_cast<std::size_t>(g.front())])
          throw ConfigError("tie group broken at layer " + std::to_string(i));
    if (c.spatial < spatial_lo_ || c.spatial > spatial_hi_ || (even_spatial_ && c.spatial % 2))
      throw ConfigError("spatial " + std::to_string(c.spatial) + " out of range");
    if (c.depth < min_depth_ || c.depth > max_depth())
      throw ConfigError("depth " + std::to_string(c.depth) + " out of range");
  }

 private:
  void validate() const {
    if (layers_.empty()) throw ConfigError("space: no layers");
    if (input_channels_ < 1) throw ConfigError("space: input_channels must be >= 1");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      const std::string at = "space: layer " + std::to_string(i) + ": ";
      if (l.min_out_channels < 1 || l.min_out_channels > l.max_out_channels)
        throw ConfigError(at + "need 1 <= min_out_channels <= max_out_channels");
      if (l.stride < 1) throw ConfigError(at + "stride must be >= 1");
      if (l.kind != LayerKind::dense && (l.kernel < 1 || l.kernel % 2 == 0))
        throw ConfigError(at + "kernel must be odd and >= 1");
      const int expected_in = i == 0 ? input_channels_ : layers_[i - 1].max_out_channels;
      if (l.max_in_channels != expected_in)
        throw ConfigError(at + "max_in_channels " + std::to_string(l.max_in_channels) +
                          " does not match producer width " + std::to_string(expected_in));
      if (l.kind == LayerKind::depthwise_conv && l.max_in_channels != l.max_out_channels)
        throw ConfigError(at + "depthwise layer needs equal in/out channels");
      if (i > 0 && l.kind != LayerKind::dense && layers_[i - 1].kind == LayerKind::dense)
        throw ConfigError(at + "convolution after a dense layer");
    }
    std::vector<int> seen(layers_.size(), 0);
    for (const auto& g : tie_groups_) {
      if (g.empty()) throw ConfigError("space: empty tie group");
      for (int i : g) {
        if (i < 0 || static_cast<std::size_t>(i) >= layers_.size())
          throw ConfigError("space: tie group index " + std::to_string(i) + " out of range");
        if (seen[static_cast<std::size_t>(i)]++)
          throw ConfigError("space: layer " + std::to_string(i) + " in more than one tie group");
        const auto& a = layers_[static_cast<std::size_t>(i)];
        const auto& b = layers_[static_cast<std::size_t>(g.front())];
        if (a.max_out_channels != b.max_out_channels || a.min_out_channels != b.min_out_channels)
          throw ConfigError("space: tied layers need identical channel bounds");
      }
    }
    auto tied = [&](std::size_t a, std::size_t b) {
      if (a == b) return true;
      for (const auto& g : tie_groups_) {
        const bool ha = std::find(g.begin(), g.end(), static_cast<int>(a)) != g.end();
        const bool hb = std::find(g.begin(), g.end(), static_cast<int>(b)) != g.end();
        if (ha && hb) return true;
      }
      const auto& la = layers_[a];
      const auto& lb = layers_[b];
      return la.min_out_channels == la.max_out_channels && lb.min_out_channels == lb.max_out_channels &&
             la.max_out_channels == lb.max_out_channels;
    };
    for (std::size_t i = 1; i < layers_.size(); ++i)
      if (layers_[i].kind == LayerKind::depthwise_conv && !tied(i, i - 1))
        throw ConfigError("space: depthwise layer " + std::to_string(i) +
                          " must be tied to its producer");
    for (int b : droppable_) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].block_id == b) members.push_back(i);
      if (members.empty())
        throw ConfigError("space: droppable block " + std::to_string(b) + " has no layers");
      for (std::size_t k = 1; k < members.size(); ++k)
        if (members[k] != members[k - 1] + 1)
          throw ConfigError("space: droppable block " + std::to_string(b) + " is not contiguous");
      if (members.front() == 0)
        throw ConfigError("space: the first layer cannot belong to a droppable block");
      const std::size_t producer = members.front() - 1;
      const std::size_t last = members.back();
      if (layers_[last].kind == LayerKind::dense)
        throw ConfigError("space: droppable block " + std::to_string(b) + " contains a dense layer");
      if (!tied(producer, last))
        throw ConfigError("space: droppable block " + std::to_string(b) +
                          " must keep in/out channels equal (tie layer " +
                          std::to_string(producer) + " with " + std::to_string(last) + ")");
      for (std::size_t i : members)
        if (layers_[i].stride != 1)
          throw ConfigError("space: droppable block " + std::to_string(b) + " has a strided layer");
    }
    for (std::size_t a = 0; a < droppable_.size(); ++a)
      for (std::size_t b = a + 1; b < droppable_.size(); ++b)
        if (droppable_[a] == droppable_[b]) throw ConfigError("space: duplicate droppable block");
    if (spatial_max_ < 1 || spatial_min_ < 1 || spatial_min_ > spatial_max_)
      throw ConfigError("space: need 1 <= spatial_min <= spatial_max");
    if (min_depth_ < 0 || min_depth_ > static_cast<int>(droppable_.size()))
      throw ConfigError("space: need 0 <= min_depth <= number of droppable blocks");
  }

  std::vector<LayerSpec> layers_;
  std::vector<std::vector<int>> tie_groups_;
  std::vector<int> droppable_;
  int spatial_max_ = 1;
  int spatial_min_ = 1;
  int min_depth_ = 0;
  int input_channels_ = 1;
  std::vector<int> group_of_;
  bool even_spatial_ = false;
  int spatial_lo_ = 1;
  int spatial_hi_ = 1;

  friend ArchitectureConfig round_to_config(const PruningVector&, const ArchitectureSpace&);
};

inline void check_vector_size(const PruningVector& v, const ArchitectureSpace& space) {
  if (v.size() != space.vector_size())
    throw ShapeError("pruning vector has " + std::to_string(v.size()) + " entries, space needs " +
                     std::to_string(space.vector_size()));
}

inline PruningVector normalize(const ArchitectureConfig& config, const ArchitectureSpace& space) {
  if (config.out_channels.size() != space.num_layers())
    throw ShapeError("config has " + std::to_string(config.out_channels.size()) +
                     " layers, space has " + std::to_string(space.num_layers()));
  std::vector<double> e(space.vector_size());
  for (std::size_t i = 0; i < space.num_layers(); ++i)
    e[i] = config.out_channels[i] / space.entry_max(i);
  e[space.spatial_index()] = config.spatial / space.entry_max(space.spatial_index());
  e[space.depth_index()] = space.max_depth() == 0 ? 1.0 : config.depth / space.entry_max(space.depth_index());
  return PruningVector(std::move(e));
}

/// Clips every entry to [lower bound, 1] and sets tied entries to their mean.
inline PruningVector clamp(const PruningVector& v, const ArchitectureSpace& space) {
  check_vector_size(v, space);
  std::vector<double> e(v.values());
  for (std::size_t i = 0; i < e.size(); ++i)
    e[i] = std::clamp(e[i], space.entry_lower_bound(i), 1.0);
  for (const auto& g : space.tie_groups()) {
    double sum = 0.0;
    for (int i : g) sum += e[static_cast<std::size_t>(i)];
    const double mean = sum / static_cast<double>(g.size());
    for (int i : g) e[static_cast<std::size_t>(i)] = mean;
  }
  return PruningVector(std::move(e));
}

/// Unique mapping from a (possibly noisy) vector to an architecture: tied
/// entries are averaged, every entry is scaled by its maximum, rounded half
/// away from zero (to the nearest even value for spatial sizes in strided
/// networks) and clamped to its admissible range.
inline ArchitectureConfig round_to_config(const PruningVector& v, const ArchitectureSpace& space) {
  check_vector_size(v, space);
  const std::size_t L = space.num_layers();
  std::vector<double> e(v.values());
  for (const auto& g : space.tie_groups()) {
    double sum = 0.0;
    for (int i : g) sum += e[static_cast<std::size_t>(i)];
    const double mean = sum / static_cast<double>(g.size());
    for (int i : g) e[static_cast<std::size_t>(i)] = mean;
  }
  ArchitectureConfig c;
  c.out_channels.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    const auto& l = space.layer(i);
    c.out_channels[i] =
        std::clamp(round_half_away(e[i] * l.max_out_channels), l.min_out_channels, l.max_out_channels);
  }
  const double s = e[space.spatial_index()] * space.spatial_max();
  c.spatial = space.even_spatial() ? 2 * round_half_away(s / 2.0) : round_half_away(s);
  c.spatial = std::clamp(c.spatial, space.spatial_lo_, space.spatial_hi_);
  c.depth = space.max_depth() == 0
                ? 0
                : std::clamp(round_half_away(e[space.depth_index()] * space.max_depth()),
                             space.min_depth(), space.max_depth());
  return c;
}

/// Mandatory layers plus the layers of the first `depth` droppable blocks, in network order.
inline std::vector<std::size_t> active_layers(const ArchitectureConfig& config,
                                              const ArchitectureSpace& space) {
  const auto& dropped = space.droppable_blocks();
  const auto kept_end = dropped.begin() + std::clamp(config.depth, 0, space.max_depth());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < space.num_layers(); ++i) {
    const int b = space.layer(i).block_id;
    const auto pos = std::find(dropped.begin(), dropped.end(), b);
    if (pos == dropped.end() || pos < kept_end) out.push_back(i);
  }
  return out;
}

/// Spatial side length seen at the input of every layer (dense layers see 1),
/// following the active path with same-padding convolution arithmetic.
inline std::vector<int> layer_input_spatial(const ArchitectureConfig& config,
                                            const ArchitectureSpace& space) {
  std::vector<int> in(space.num_layers(), 0);
  int s = config.spatial;
  for (std::size_t i : active_layers(config, space)) {
    const auto& l = space.layer(i);
    if (l.kind == LayerKind::dense) {
      in[i] = 1;
      continue;
    }
    in[i] = s;
    const int pad = l.kernel / 2;
    s = (s + 2 * pad - l.kernel) / l.stride + 1;
  }
  return in;
}

/// Input channel count of every layer: the out_channels of the previous active layer.
inline std::vector<int> layer_input_channels(const ArchitectureConfig& config,
                                             const ArchitectureSpace& space) {
  std::vector<int> in(space.num_layers(), 0);
  int c = space.input_channels();
  for (std::size_t i : active_layers(config, space)) {
    in[i] = c;
    c = config.out_channels[i];
  }
  return in;
}

}  // namespace mdprune
