#include <gtest/gtest.h>

#include <sstream>

#include "mdprune/latency_table.hpp"
#include "mdprune/random.hpp"
#include "oracles.hpp"

using namespace mdprune;

namespace {

LatencyTable parse(const std::string& text) {
  std::istringstream is(text);
  return parse_latency_csv(is);
}

double affine(const LatencyKey& k) { return 3.0 + 0.5 * k.in_channels + 1.25 * k.out_channels + 0.75 * k.spatial_in; }

}  // namespace

TEST(Latency, SingleLayerExactRow) {
  const ArchitectureSpace s({{LayerKind::dense, 1, 1, 8, 4, 4, false, 0}}, {}, {}, 1, 1, 0, 8);
  LatencyTable t;
  t.insert({0, 8, 4, 1}, 100.0);
  EXPECT_EQ(latency(s.maximal_config(), s, t), 100.0);
}

TEST(Latency, SumsLayers) {
  const ArchitectureSpace s({{LayerKind::conv, 3, 1, 2, 4, 1, true, 0}, {LayerKind::dense, 1, 1, 4, 3, 3, false, 1}},
                            {}, {}, 8, 1, 0, 2);
  LatencyTable t;
  t.insert({0, 2, 4, 8}, 100.0);
  t.insert({1, 4, 3, 1}, 50.0);
  EXPECT_EQ(latency(s.maximal_config(), s, t), 150.0);
}

TEST(Latency, InterpolatesChannelsMidway) {
  LatencyTable t;
  t.insert({0, 3, 16, 8}, 100.0);
  t.insert({0, 3, 32, 8}, 200.0);
  EXPECT_DOUBLE_EQ(t.lookup({0, 3, 24, 8}), 150.0);
}

TEST(Latency, RefusesExtrapolation) {
  LatencyTable t;
  t.insert({0, 3, 16, 8}, 100.0);
  t.insert({0, 3, 32, 8}, 200.0);
  EXPECT_THROW(t.lookup({0, 3, 40, 8}), ExtrapolationError);
  EXPECT_THROW(t.lookup({0, 3, 24, 6}), ExtrapolationError);
  EXPECT_THROW(t.lookup({1, 3, 24, 8}), ExtrapolationError);
}

TEST(Latency, InterpolationStaysWithinBracket) {
  LatencyTable t;
  Rng rng(1);
  for (int a : {4, 8})
    for (int b : {4, 12})
      for (int c : {2, 8}) t.insert({0, a, b, c}, rng.uniform(5.0, 50.0));
  double lo = 1e9, hi = 0;
  for (const auto& [k, v] : t.rows()) lo = std::min(lo, v), hi = std::max(hi, v);
  for (int i = 0; i < 200; ++i) {
    const LatencyKey k{0, 4 + static_cast<int>(rng.below(5)), 4 + static_cast<int>(rng.below(9)),
                       2 + static_cast<int>(rng.below(7))};
    const double v = t.lookup(k);
    EXPECT_GE(v, lo - 1e-12);
    EXPECT_LE(v, hi + 1e-12);
  }
}

TEST(Latency, AdditiveOverActiveLayers) {
  const auto s = oracle::small_backbone(2, 2, 6, 8);
  LatencyTable t;
  for (int id = 0; id < static_cast<int>(s.num_layers()); ++id)
    for (int in : {1, 2, 6})
      for (int out : {1, 3, 6})
        for (int sp : {1, 2, 4, 8}) t.insert({id, in, out, sp}, 1.0 + id + in * out * 0.1 + sp);
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto c = oracle::random_config(s, rng);
    double sum = 0.0;
    for (const auto& l : layer_cost_specs(c, s)) sum += t.lookup(latency_key(l));
    EXPECT_EQ(latency(c, s, t), sum);
  }
}

TEST(FillMissing, CompleteTableUnchanged) {
  LatencyTable t;
  for (int a : {2, 4})
    for (int b : {2, 4}) t.insert({0, a, b, 8}, a + b + 1.0);
  EXPECT_EQ(fill_missing(t).rows(), t.rows());
}

TEST(FillMissing, MidpointGap) {
  LatencyTable t;
  t.insert({0, 2, 8, 4}, 10.0);
  t.insert({0, 2, 24, 4}, 30.0);
  t.insert({0, 2, 16, 8}, 5.0);
  t.insert({0, 2, 8, 8}, 5.0);
  t.insert({0, 2, 24, 8}, 5.0);
  const auto f = fill_missing(t);
  EXPECT_DOUBLE_EQ(f.lookup({0, 2, 16, 4}), 20.0);
  EXPECT_EQ(f.size(), 6u);
}

TEST(FillMissing, ReconstructsAffineTable) {
  LatencyTable full;
  const std::vector<int> ins{2, 4, 8, 16}, outs{4, 8, 12, 16, 24}, sps{2, 4, 8, 16};
  for (int id : {0, 1})
    for (int a : ins)
      for (int b : outs)
        for (int c : sps) full.insert({id, a, b, c}, affine({id, a, b, c}) + id);
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    LatencyTable sparse;
    std::size_t kept = 0;
    for (const auto& [k, v] : full.rows()) {
      // Keep the corners so every axis range survives.
      const bool corner = (k.in_channels == 2 || k.in_channels == 16) && (k.out_channels == 4 || k.out_channels == 24) &&
                          (k.spatial_in == 2 || k.spatial_in == 16);
      if (corner || rng.uniform() >= 0.3) sparse.insert(k, v), ++kept;
    }
    ASSERT_LT(kept, full.size());
    const auto filled = fill_missing(sparse);
    ASSERT_EQ(filled.size(), full.size());
    for (const auto& [k, v] : full.rows()) EXPECT_NEAR(filled.lookup(k), v, 1e-9 * v) << to_string(k);
  }
}

TEST(FillMissing, RefusesSingleRowAxis) {
  LatencyTable t;
  t.insert({0, 2, 4, 8}, 1.0);
  t.insert({0, 3, 5, 8}, 1.0);
  EXPECT_THROW(fill_missing(t), ConfigError);
}

TEST(LatencyCsv, RoundTrip) {
  const auto t = parse("# hardware: desk cpu\n# batch_size: 4\n" + std::string(kLatencyCsvHeader) +
                       "\n0,3,24,16,12.5\n1,24,24,8,7.25\n");
  EXPECT_EQ(t.hardware, "desk cpu");
  EXPECT_EQ(t.batch_size, 4);
  EXPECT_EQ(t.size(), 2u);
  std::ostringstream os;
  write_latency_csv(os, t);
  const auto back = parse(os.str());
  EXPECT_EQ(back.rows(), t.rows());
  EXPECT_EQ(back.hardware, t.hardware);
}

TEST(LatencyCsv, DuplicateKeyNamesLine) {
  try {
    parse(std::string(kLatencyCsvHeader) + "\n0,3,24,16,12.5\n0,3,24,16,13\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos) << e.what();
  }
}

TEST(LatencyCsv, RejectsBadRows) {
  const std::string h = std::string(kLatencyCsvHeader) + "\n";
  EXPECT_THROW(parse(h + "0,3,24,16,-1\n"), ConfigError);
  EXPECT_THROW(parse(h + "0,3,24,16\n"), ConfigError);
  EXPECT_THROW(parse(h + "0,3,x,16,1\n"), ConfigError);
  EXPECT_THROW(parse("layer,in\n0,1\n"), ConfigError);
  EXPECT_THROW(parse(""), ConfigError);
  try {
    parse(h + "\n0,3,24,16,1\n0,3,24,zz,1\n");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}
