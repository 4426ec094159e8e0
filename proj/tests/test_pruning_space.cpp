#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "mdprune/pruning_space.hpp"
#include "mdprune/random.hpp"
#include "mdprune/trainer.hpp"
#include "oracles.hpp"

using namespace mdprune;

namespace {

LayerSpec conv(int in, int out, int min, int block, int stride = 1) {
  return {LayerKind::conv, 3, stride, in, out, min, true, block};
}
LayerSpec dense(int in, int out) { return {LayerKind::dense, 1, 1, in, out, out, false, 99}; }

// Three stride-1 convs of width 32 (two droppable) and a dense head of 64.
ArchitectureSpace ratio_space() {
  return ArchitectureSpace({conv(3, 32, 4, 0), conv(32, 32, 4, 1), conv(32, 32, 4, 2), dense(32, 64)},
                           {{0, 1, 2}}, {1, 2}, 16, 4, 0, 3);
}

// 120 configs: 4 (tied pair) x 3 (free) x 5 (spatial) x 2 (depth).
ArchitectureSpace tiny_space() {
  return ArchitectureSpace({conv(2, 4, 1, 0), conv(4, 3, 1, 1), conv(3, 4, 1, 1), dense(4, 3)}, {{0, 2}}, {1}, 5, 1,
                           0, 2);
}

std::vector<ArchitectureConfig> enumerate(const ArchitectureSpace& s) {
  std::vector<ArchitectureConfig> out;
  for (int a = 1; a <= 4; ++a)
    for (int b = 1; b <= 3; ++b)
      for (int sp = 1; sp <= 5; ++sp)
        for (int d = 0; d <= 1; ++d) out.push_back({{a, b, a, 3}, sp, d});
  (void)s;
  return out;
}

}  // namespace

TEST(Normalize, MaximalConfigIsAllOnes) {
  const auto s = ratio_space();
  const auto v = normalize(s.maximal_config(), s);
  for (double x : v.values()) EXPECT_EQ(x, 1.0);
}

TEST(Normalize, ExactRatios) {
  const auto s = ratio_space();
  const auto v = normalize({{16, 16, 16, 64}, 8, 1}, s);
  const std::vector<double> expect{0.5, 0.5, 0.5, 1.0, 0.5, 0.5};
  EXPECT_EQ(v.values(), expect);
}

TEST(Normalize, LengthMismatchThrows) {
  const auto s = ratio_space();
  EXPECT_THROW(normalize({{16, 16}, 8, 1}, s), ShapeError);
}

TEST(RoundToConfig, AllOnesGivesMaximal) {
  const auto s = oracle::small_backbone(3, 2, 24, 16);
  EXPECT_EQ(round_to_config(PruningVector(std::vector<double>(s.vector_size(), 1.0)), s), s.maximal_config());
}

TEST(RoundToConfig, HalfRoundsAwayFromZero) {
  const ArchitectureSpace s({conv(3, 33, 1, 0), dense(33, 2)}, {}, {}, 8, 1, 0, 3);
  const auto c = round_to_config(PruningVector({0.5, 1.0, 1.0, 1.0}), s);
  EXPECT_EQ(c.out_channels[0], 17);
}

TEST(RoundToConfig, TiedEntriesAveraged) {
  const ArchitectureSpace s({conv(3, 20, 1, 0), conv(20, 20, 1, 1), dense(20, 2)}, {{0, 1}}, {1}, 8, 1, 0, 3);
  const auto c = round_to_config(PruningVector({0.4, 0.6, 1.0, 1.0, 1.0}), s);
  EXPECT_EQ(c.out_channels[0], 10);
  EXPECT_EQ(c.out_channels[1], 10);
}

TEST(RoundToConfig, TiedChannelsMatchNearestTieRespectingOracle) {
  // Oracle: among all shared channel counts c, the one whose normalized
  // vector (c/max, c/max, ...) is nearest in L2 to the tied entries.
  const auto s = oracle::small_backbone(3, 2, 24, 16);
  Rng rng(11);
  const auto& group = s.tie_groups().front();
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> e(s.vector_size());
    for (auto& x : e) x = rng.uniform(-0.2, 1.3);
    const auto c = round_to_config(PruningVector(e), s);
    const auto& l = s.layer(static_cast<std::size_t>(group.front()));
    int best = -1;
    double best_d = INFINITY;
    for (int ch = 0; ch <= l.max_out_channels * 2; ++ch) {
      double d = 0.0;
      for (int i : group) d += std::pow(ch / static_cast<double>(l.max_out_channels) - e[static_cast<std::size_t>(i)], 2);
      if (d < best_d) best_d = d, best = ch;
    }
    best = std::clamp(best, l.min_out_channels, l.max_out_channels);
    for (int i : group) ASSERT_EQ(c.out_channels[static_cast<std::size_t>(i)], best) << "trial " << trial;
  }
}

TEST(RoundToConfig, EvenSpatialWhenStrided) {
  const auto s = oracle::small_backbone(1, 1, 8, 16);
  ASSERT_TRUE(s.even_spatial());
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> e(s.vector_size(), 1.0);
    e[s.spatial_index()] = rng.uniform(0.0, 1.2);
    const auto c = round_to_config(PruningVector(e), s);
    EXPECT_EQ(c.spatial % 2, 0);
    EXPECT_GE(c.spatial, s.spatial_min());
    EXPECT_LE(c.spatial, 16);
  }
  std::vector<double> e(s.vector_size(), 1.0);
  e[s.spatial_index()] = 10.0 / 16;  // 10 is even already
  EXPECT_EQ(round_to_config(PruningVector(e), s).spatial, 10);
  e[s.spatial_index()] = 11.2 / 16;
  EXPECT_EQ(round_to_config(PruningVector(e), s).spatial, 12);
}

TEST(RoundToConfig, ExhaustiveRoundTrip) {
  const auto s = tiny_space();
  const auto all = enumerate(s);
  ASSERT_EQ(all.size(), 120u);
  for (const auto& c : all) {
    s.check(c);
    ASSERT_EQ(round_to_config(normalize(c, s), s), c);
  }
}

TEST(RoundToConfig, TieSafetyDeterminismAndMonotonicity) {
  const auto s = oracle::small_backbone(3, 2, 24, 16);
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> e(s.vector_size());
    for (auto& x : e) x = rng.uniform(-0.5, 1.5);
    const auto c = round_to_config(PruningVector(e), s);
    EXPECT_EQ(c, round_to_config(PruningVector(e), s));
    EXPECT_NO_THROW(s.check(c));
    for (const auto& g : s.tie_groups())
      for (int i : g) EXPECT_EQ(c.out_channels[static_cast<std::size_t>(i)], c.out_channels[static_cast<std::size_t>(g.front())]);
    const std::size_t k = rng.below(s.vector_size());
    auto up = e;
    up[k] += rng.uniform(0.0, 0.3);
    const auto cu = round_to_config(PruningVector(up), s);
    if (k < s.num_layers()) EXPECT_GE(cu.out_channels[k], c.out_channels[k]);
    else if (k == s.spatial_index()) EXPECT_GE(cu.spatial, c.spatial);
    else EXPECT_GE(cu.depth, c.depth);
  }
}

TEST(Clamp, ClipsToBounds) {
  const ArchitectureSpace s({conv(3, 10, 1, 0), dense(10, 2)}, {}, {}, 8, 2, 0, 3);
  const auto v = clamp(PruningVector({1.3, 1.0, 0.01, 1.0}), s);
  EXPECT_EQ(v[0], 1.0);
  EXPECT_EQ(v[2], 0.25);
  const auto w = clamp(PruningVector({0.05, 1.0, 1.0, 1.0}), s);
  EXPECT_EQ(w[0], 0.1);
}

TEST(Clamp, InRangeUnchangedAndIdempotent) {
  const auto s = oracle::small_backbone(3, 2, 24, 16);
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> e(s.vector_size());
    for (auto& x : e) x = rng.uniform(-0.5, 1.5);
    const auto once = clamp(PruningVector(e), s);
    EXPECT_EQ(clamp(once, s), once);
    for (std::size_t i = 0; i < once.size(); ++i) {
      EXPECT_GE(once[i], s.entry_lower_bound(i));
      EXPECT_LE(once[i], 1.0);
    }
  }
  const auto mid = normalize(round_to_config(PruningVector(std::vector<double>(s.vector_size(), 0.6)), s), s);
  EXPECT_EQ(clamp(mid, s), mid);
}

TEST(ActiveLayers, DepthSelectsLeadingBlocks) {
  const auto s = oracle::small_backbone(3, 2, 8, 16);
  auto c = s.maximal_config();
  EXPECT_EQ(active_layers(c, s), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  c.depth = 1;
  EXPECT_EQ(active_layers(c, s), (std::vector<std::size_t>{0, 1, 2, 7}));
  c.depth = 0;
  EXPECT_EQ(active_layers(c, s), (std::vector<std::size_t>{0, 7}));
}

TEST(ActiveLayers, InputChannelsChainThroughKeptLayers) {
  const auto s = oracle::small_backbone(2, 2, 8, 16);
  ArchitectureConfig c{{6, 3, 6, 5, 6, 3}, 8, 1};
  const auto in = layer_input_channels(c, s);
  EXPECT_EQ(in[0], 2);
  EXPECT_EQ(in[1], 6);
  EXPECT_EQ(in[2], 3);
  EXPECT_EQ(in[5], 6);
  EXPECT_EQ(in[3], 0);  // dropped
}

TEST(ArchitectureSpace, RejectsBrokenInvariants) {
  EXPECT_THROW(ArchitectureSpace({conv(3, 8, 9, 0), dense(8, 2)}, {}, {}, 8, 1, 0, 3), ConfigError);
  EXPECT_THROW(ArchitectureSpace({conv(3, 8, 1, 0), conv(8, 8, 1, 1), dense(8, 2)}, {{0, 1}, {1}}, {}, 8, 1, 0, 3),
               ConfigError);
  EXPECT_THROW(ArchitectureSpace({conv(3, 8, 1, 0), conv(8, 8, 1, 1), dense(8, 2)}, {{0, 5}}, {}, 8, 1, 0, 3),
               ConfigError);
  EXPECT_THROW(ArchitectureSpace({conv(3, 8, 1, 0), dense(8, 2)}, {}, {}, 4, 8, 0, 3), ConfigError);
  // Droppable block that changes width.
  EXPECT_THROW(ArchitectureSpace({conv(3, 8, 1, 0), conv(8, 8, 1, 1), dense(8, 2)}, {}, {1}, 8, 1, 0, 3), ConfigError);
  EXPECT_THROW(ArchitectureSpace({conv(3, 8, 1, 0), conv(8, 8, 1, 1), dense(8, 2)}, {{0, 1}}, {1}, 8, 1, 2, 3),
               ConfigError);
  // Chain mismatch.
  EXPECT_THROW(ArchitectureSpace({conv(3, 8, 1, 0), dense(9, 2)}, {}, {}, 8, 1, 0, 3), ConfigError);
}

TEST(ArchitectureSpace, DefaultLowerBounds) {
  EXPECT_EQ(default_min_channels(24), 3);
  EXPECT_EQ(default_min_channels(10), 1);
  EXPECT_EQ(default_min_channels(5), 1);
  EXPECT_EQ(default_spatial_min(16), 4);
  EXPECT_EQ(default_spatial_min(8), 2);
  const auto s = make_backbone({});
  EXPECT_EQ(s.min_depth(), 1);
  EXPECT_EQ(s.layer(1).min_out_channels, 3);
}
