#pragma once

// Weight training under sampled architectures and error evaluation of a
// pruning vector with cropped weights.

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mdprune/cost_model.hpp"
#include "mdprune/dataset.hpp"
#include "mdprune/grad_estimator.hpp"
#include "mdprune/pruning_space.hpp"
#include "mdprune/random.hpp"
#include "mdprune/resource_cost.hpp"
#include "mdprune/shared_net.hpp"

namespace mdprune {

struct BackboneSpec {
  int input_channels = 3;
  int num_classes = 10;
  int spatial_max = 16;
  int width = 24;
  int droppable_blocks = 3;
  /// Convolutions per droppable block. The last one is tied to the stem so
  /// the block keeps its input width; any earlier ones prune freely.
  int convs_per_block = 2;
};

/// Stem conv (stride 2), `droppable_blocks` blocks of stride-1 3x3 convs,
/// global average pool, dense classifier.
inline ArchitectureSpace make_backbone(const BackboneSpec& b) {
  if (b.convs_per_block < 1) throw ConfigError("backbone: convs_per_block must be >= 1");
  std::vector<LayerSpec> layers;
  const int min_c = default_min_channels(b.width);
  layers.push_back({LayerKind::conv, 3, 2, b.input_channels, b.width, min_c, true, 0});
  std::vector<int> tied{0};
  std::vector<int> droppable;
  for (int blk = 1; blk <= b.droppable_blocks; ++blk) {
    droppable.push_back(blk);
    for (int j = 0; j < b.convs_per_block; ++j) {
      layers.push_back({LayerKind::conv, 3, 1, b.width, b.width, min_c, true, blk});
      if (j == b.convs_per_block - 1) tied.push_back(static_cast<int>(layers.size()) - 1);
    }
  }
  layers.push_back({LayerKind::dense, 1, 1, b.width, b.num_classes, b.num_classes, false,
                    b.droppable_blocks + 1});
  std::vector<std::vector<int>> ties;
  if (tied.size() > 1) ties.push_back(tied);
  return ArchitectureSpace(std::move(layers), std::move(ties), std::move(droppable), b.spatial_max,
                           default_spatial_min(b.spatial_max), std::min(1, b.droppable_blocks),
                           b.input_channels);
}

struct TrainParams {
  int iterations = 200;
  int batch_size = 32;
  SgdParams sgd;
};

/// Weight-training inner loop: every iteration samples v ~ N(mu, sigma),
/// clamps and rounds it to an architecture, and takes one SGD step on the
/// cropped weights with a mini-batch downsampled to that resolution.
/// Returns the mean pre-step training loss. Deterministic in `seed`.
inline double train_inner(SharedWeightStore& store, const GaussianPolicy& policy, const Batch& train,
                          const TrainParams& p, std::uint64_t seed) {
  if (p.iterations < 1) throw ConfigError("train_inner: iterations must be >= 1");
  if (p.batch_size < 1 || train.count < 1) throw ConfigError("train_inner: empty batch");
  const auto& space = store.space();
  check_vector_size(policy.mu, space);
  Rng rng(seed);
  std::vector<std::size_t> order(static_cast<std::size_t>(train.count));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  double total = 0.0;
  std::vector<double> v(policy.mu.size());
  std::vector<std::size_t> idx;
  for (int it = 0; it < p.iterations; ++it) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = policy.mu[k] + policy.sigma * rng.normal();
    const auto config = round_to_config(clamp(PruningVector(v), space), space);
    idx.clear();
    for (int b = 0; b < p.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const Batch batch = downsample(take(train, idx), config.spatial);
    total += backward_and_step(store, crop_view(store, config), batch, p.sgd);
  }
  return total / p.iterations;
}

/// Mean loss and top-1 accuracy of one architecture on a data set.
struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Evaluated in chunks of kEvalChunk images; the loss is the mean over all of them.
inline LossAccuracy evaluate_config(const SharedWeightStore& store, const ArchitectureConfig& config,
                                    const Batch& data) {
  constexpr int kEvalChunk = 64;
  if (data.count < 1) throw ConfigError("evaluation set is empty");
  const auto view = crop_view(store, config);
  const Batch scaled = downsample(data, config.spatial);
  double loss_sum = 0.0;
  int correct = 0;
  std::vector<std::size_t> idx;
  for (int start = 0; start < data.count; start += kEvalChunk) {
    idx.clear();
    for (int n = start; n < std::min(data.count, start + kEvalChunk); ++n) idx.push_back(static_cast<std::size_t>(n));
    const Batch chunk = take(scaled, idx);
    const auto fwd = forward(view, chunk, false);
    loss_sum += fwd.loss * chunk.count;
    for (int n = 0; n < chunk.count; ++n) {
      const double* z = fwd.logits.data() + static_cast<std::size_t>(n) * fwd.classes;
      const int pred = static_cast<int>(std::max_element(z, z + fwd.classes) - z);
      correct += pred == chunk.labels[static_cast<std::size_t>(n)];
    }
  }
  return {loss_sum / data.count, static_cast<double>(correct) / data.count};
}

struct Evaluation {
  ArchitectureConfig config;
  double loss = 0.0;
  double cost = 0.0;
  double error = 0.0;
};

/// Error of a pruning vector: clamp and round it, take the mean validation
/// loss with cropped weights, and add the constraint penalty on its cost.
inline Evaluation evaluate_error(const SharedWeightStore& store, const PruningVector& v, const Batch& val,
                                 const ConstraintSpec& constraint, const CostModel& cost) {
  const auto& space = store.space();
  Evaluation e;
  e.config = round_to_config(clamp(v, space), space);
  e.loss = evaluate_config(store, e.config, val).loss;
  e.cost = cost(e.config);
  e.error = penalized_error(e.loss, e.cost, constraint);
  return e;
}

/// Trains one fixed architecture on the store's weights.
inline void fine_tune(SharedWeightStore& store, const ArchitectureConfig& config, const Batch& train,
                      const TrainParams& p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> order(static_cast<std::size_t>(train.count));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  const auto view = crop_view(store, config);
  const Batch full = downsample(train, config.spatial);
  std::vector<std::size_t> idx;
  for (int it = 0; it < p.iterations; ++it) {
    idx.clear();
    for (int b = 0; b < p.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    backward_and_step(store, view, take(full, idx), p.sgd);
  }
}

}  // namespace mdprune
