#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mdprune/checkpoint.hpp"
#include "oracles.hpp"

using namespace mdprune;

namespace {

SharedWeightStore trained_store() {
  const auto s = oracle::small_backbone(2, 2, 6, 8);
  SharedWeightStore st(s, 3);
  backward_and_step(st, crop_view(st, s.maximal_config()), oracle::random_batch(4, 2, 8, 3, 1), SgdParams{});
  return st;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto st = trained_store();
  const auto bytes = encode_checkpoint(st, {{"next_step", 4}});
  const auto back = decode_checkpoint(bytes);
  EXPECT_TRUE(back.store == st);
  EXPECT_EQ(back.metadata["next_step"], 4);
  EXPECT_EQ(space_to_json(back.store.space()), space_to_json(st.space()));
  EXPECT_EQ(encode_checkpoint(back.store, back.metadata), encode_checkpoint(st, back.metadata));
}

TEST(Checkpoint, HeaderLayout) {
  const auto st = trained_store();
  const auto bytes = encode_checkpoint(st);
  EXPECT_EQ(bytes.substr(0, 8), "MDPSTORE");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);  // version, little endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), st.layers().size());
  // First layer: kind, out, in, kernel as u32, then the weights.
  EXPECT_EQ(static_cast<unsigned char>(bytes[20]), static_cast<unsigned>(st.layers()[0].out));
  double w0 = 0.0;
  std::memcpy(&w0, bytes.data() + 32, 8);
  EXPECT_EQ(w0, st.layers()[0].weight[0]);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto bytes = encode_checkpoint(trained_store());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), ConfigError);
  bad = bytes;
  bad[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad), ConfigError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), ConfigError);
  EXPECT_THROW(decode_checkpoint(""), ConfigError);
  bad = bytes;
  bad[16] = 1;  // layer 0 claims to be depthwise
  EXPECT_THROW(decode_checkpoint(bad), ShapeError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "mdprune_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "store.bin").string();
  const auto st = trained_store();
  save_checkpoint(path, st, {{"tag", "x"}});
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  const auto back = load_checkpoint(path);
  EXPECT_TRUE(back.store == st);
  EXPECT_EQ(back.metadata["tag"], "x");
  EXPECT_THROW(load_checkpoint((dir / "missing.bin").string()), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, SpaceJsonRoundTrip) {
  const ArchitectureSpace s({{LayerKind::conv, 3, 1, 2, 6, 2, true, 0},
                             {LayerKind::depthwise_conv, 3, 2, 6, 6, 2, true, 0},
                             {LayerKind::dense, 1, 1, 6, 3, 3, false, 1}},
                            {{0, 1}}, {}, 8, 2, 0, 2);
  const auto back = space_from_json(space_to_json(s));
  EXPECT_EQ(space_to_json(back), space_to_json(s));
  EXPECT_EQ(back.maximal_config(), s.maximal_config());
}
