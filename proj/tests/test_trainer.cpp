#include <gtest/gtest.h>

#include "mdprune/evaluators.hpp"
#include "mdprune/trainer.hpp"
#include "oracles.hpp"

using namespace mdprune;

namespace {

Dataset small_data() {
  DatasetSpec spec;
  spec.num_classes = 3;
  spec.samples_per_class = 40;
  spec.s_max = 8;
  spec.channels = 2;
  spec.seed = 5;
  return make_dataset(spec);
}

}  // namespace

TEST(TrainInner, SameSeedSameStore) {
  const auto s = oracle::small_backbone(2, 2, 6, 8);
  const auto data = small_data();
  const GaussianPolicy p{PruningVector(std::vector<double>(s.vector_size(), 0.8)), 0.1};
  TrainParams tp;
  tp.iterations = 15;
  tp.batch_size = 8;
  SharedWeightStore a(s, 1), b(s, 1), c(s, 1);
  train_inner(a, p, data.train, tp, 77);
  train_inner(b, p, data.train, tp, 77);
  train_inner(c, p, data.train, tp, 78);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST(TrainInner, TinySigmaTrainsOneConfig) {
  // Every step must hit round(mu): then only that config's slices move, and
  // the result equals fine-tuning the config directly with the same stream.
  const auto s = oracle::small_backbone(2, 2, 6, 8);
  const auto data = small_data();
  std::vector<double> mu(s.vector_size(), 0.55);
  const GaussianPolicy p{PruningVector(mu), 1e-9};
  const auto config = round_to_config(clamp(p.mu, s), s);
  TrainParams tp;
  tp.iterations = 10;
  tp.batch_size = 8;
  SharedWeightStore a(s, 2);
  const SharedWeightStore before = a;
  train_inner(a, p, data.train, tp, 9);
  const auto view = crop_view(a, config);
  for (std::size_t l = 0; l < s.num_layers(); ++l) {
    std::vector<bool> covered(a.layers()[l].weight.size(), false);
    for (const auto& L : view.layers)
      if (L.layer_id == l)
        for (std::size_t q = 0; q < L.cropped_weight_count(); ++q) covered[L.store_index(q)] = true;
    for (std::size_t i = 0; i < covered.size(); ++i)
      if (!covered[i]) {
        ASSERT_EQ(a.layers()[l].weight[i], before.layers()[l].weight[i]);
      }
  }
  EXPECT_FALSE(a == before);
}

TEST(TrainInner, LowersLossOfTheMeanConfig) {
  const auto s = oracle::small_backbone(2, 2, 8, 8);
  const auto data = small_data();
  const GaussianPolicy p{PruningVector(std::vector<double>(s.vector_size(), 1.0)), 0.05};
  const auto config = round_to_config(clamp(p.mu, s), s);
  SharedWeightStore store(s, 3);
  const double before = evaluate_config(store, config, data.val).loss;
  TrainParams tp;
  tp.iterations = 200;
  tp.batch_size = 16;
  train_inner(store, p, data.train, tp, 4);
  EXPECT_LT(evaluate_config(store, config, data.val).loss, before);
}

TEST(TrainInner, RejectsBadParams) {
  const auto s = oracle::small_backbone(1, 1, 4, 8);
  const auto data = small_data();
  SharedWeightStore store(s, 1);
  const GaussianPolicy p{PruningVector(std::vector<double>(s.vector_size(), 1.0)), 0.05};
  TrainParams tp;
  tp.iterations = 0;
  EXPECT_THROW(train_inner(store, p, data.train, tp, 1), ConfigError);
  tp.iterations = 1;
  EXPECT_THROW(train_inner(store, GaussianPolicy{PruningVector({1.0}), 0.1}, data.train, tp, 1), ShapeError);
}

TEST(EvaluateError, ComposesLossAndPenalty) {
  const auto s = oracle::small_backbone(2, 2, 6, 8);
  const auto data = small_data();
  const SharedWeightStore store(s, 4);
  const auto cost = CostModel::flops_model(s);
  ConstraintSpec c;
  c.target = 0.5 * flops(s.maximal_config(), s);
  c.cost_unit = 1.0 / flops(s.maximal_config(), s);
  c.rho = 3.0;
  const PruningVector v(std::vector<double>(s.vector_size(), 0.7));
  const auto e = evaluate_error(store, v, data.val, c, cost);
  const auto config = round_to_config(clamp(v, s), s);
  EXPECT_EQ(e.config, config);
  // Manual composition: scalar-oracle loss on the downsampled set plus the penalty.
  const double loss = oracle::forward(store, config, downsample(data.val, config.spatial)).loss;
  const double f = oracle::count_multiplies(config, s);
  const double d = (f - c.target) / flops(s.maximal_config(), s);
  EXPECT_NEAR(e.loss, loss, 1e-10);
  EXPECT_EQ(e.cost, f);
  EXPECT_NEAR(e.error, loss + 3.0 * d * d, 1e-10);
}

TEST(EvaluateError, ZeroRhoOrCostAtTargetGivesLoss) {
  const auto s = oracle::small_backbone(2, 2, 6, 8);
  const auto data = small_data();
  const SharedWeightStore store(s, 4);
  const auto cost = CostModel::flops_model(s);
  const PruningVector v(std::vector<double>(s.vector_size(), 0.6));
  ConstraintSpec c;
  c.target = 1.0;
  c.rho = 0.0;
  auto e = evaluate_error(store, v, data.val, c, cost);
  EXPECT_EQ(e.error, e.loss);
  c.rho = 5.0;
  c.target = e.cost;
  e = evaluate_error(store, v, data.val, c, cost);
  EXPECT_EQ(e.error, e.loss);
}

TEST(EvaluateConfig, ChunkingDoesNotChangeTheMean) {
  const auto s = oracle::small_backbone(1, 1, 4, 8);
  const SharedWeightStore store(s, 6);
  const auto b = oracle::random_batch(150, 2, 8, 3, 7);
  const auto la = evaluate_config(store, s.maximal_config(), b);
  EXPECT_NEAR(la.loss, oracle::forward(store, s.maximal_config(), b).loss, 1e-10);
  EXPECT_GE(la.accuracy, 0.0);
  EXPECT_LE(la.accuracy, 1.0);
}

TEST(SharedNetEvaluator, MemoizesWithinAnUpdate) {
  const auto s = oracle::small_backbone(2, 2, 6, 8);
  const auto data = small_data();
  SharedWeightStore store(s, 4);
  ConstraintSpec c;
  c.target = 1000.0;
  c.rho = 1e-6;
  SharedNetEvaluator ev(store, data, c, CostModel::flops_model(s), TrainParams{}, 10);
  EXPECT_THROW(ev.evaluate(PruningVector(std::vector<double>(s.vector_size(), 1.0))), Error);
  ev.begin_update(1);
  const PruningVector a(std::vector<double>(s.vector_size(), 0.9));
  const PruningVector b(std::vector<double>(s.vector_size(), 0.9001));
  const auto ea = ev.evaluate(a);
  const auto eb = ev.evaluate(b);
  EXPECT_EQ(ea.error, eb.error);
  EXPECT_EQ(ev.cached_configs(), 1u);
  const auto full = ev.evaluate_full(a);
  EXPECT_EQ(full.config, ea.config);
  ev.begin_update(2);
  EXPECT_EQ(ev.cached_configs(), 0u);
}

TEST(EvaluatorKind, ParsesKnownKinds) {
  EXPECT_EQ(parse_evaluator_kind("analytic"), EvaluatorKind::analytic);
  EXPECT_EQ(parse_evaluator_kind("shared_net"), EvaluatorKind::shared_net);
  EXPECT_THROW(parse_evaluator_kind("gp"), ConfigError);
}

TEST(AnalyticEvaluators, ExactValues) {
  const auto s = oracle::small_backbone(1, 1, 4, 8);
  const std::size_t d = s.vector_size();
  std::vector<double> center(d, 0.5), w(d, 1.0), a(d);
  for (std::size_t i = 0; i < d; ++i) a[i] = static_cast<double>(i) + 1.0;
  QuadraticEvaluator q(s, center, w, 1.0, 2.0);
  const PruningVector v(std::vector<double>(d, 0.75));
  const double cv = 0.75 * d;
  EXPECT_DOUBLE_EQ(q.evaluate(v).error, d * 0.0625 + 2.0 * (cv - 1.0) * (cv - 1.0));
  LinearEvaluator l(s, a, 0.5);
  double expect = 0.5;
  for (std::size_t i = 0; i < d; ++i) expect += a[i] * 0.75;
  EXPECT_DOUBLE_EQ(l.evaluate(v).error, expect);
}
