#pragma once

// Store checkpoint file, all integers and floats little-endian:
//
//   offset  size  field
//   0       8     magic "MDPSTORE"
//   8       4     u32 format version (1)
//   12      4     u32 layer count L
//   then L times:
//           4     u32 layer kind (0 conv, 1 depthwise_conv, 2 dense)
//           4     u32 max_out
//           4     u32 in slices (max_in, or 1 for depthwise)
//           4     u32 kernel (1 for dense)
//           8*W   f64 weight           [max_out][in][k][k], W = max_out*in*k*k
//           8*O   f64 bias             [max_out]
//           8*W   f64 weight momentum
//           8*O   f64 bias momentum
//   then   8     u64 metadata byte length B
//           B     UTF-8 JSON metadata: {"space": {...}, ...caller fields}
//
// The space description in the metadata is required to rebuild the store.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdprune/errors.hpp"
#include "mdprune/shared_net.hpp"

namespace mdprune {

inline constexpr char kCheckpointMagic[8] = {'M', 'D', 'P', 'S', 'T', 'O', 'R', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json space_to_json(const ArchitectureSpace& s) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : s.layers())
    layers.push_back({{"kind", to_string(l.kind)},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"max_in_channels", l.max_in_channels},
                      {"max_out_channels", l.max_out_channels},
                      {"min_out_channels", l.min_out_channels},
                      {"relu", l.has_relu},
                      {"block", l.block_id}});
  return {{"layers", layers},
          {"tie_groups", s.tie_groups()},
          {"droppable_blocks", s.droppable_blocks()},
          {"spatial_max", s.spatial_max()},
          {"spatial_min", s.spatial_min()},
          {"min_depth", s.min_depth()},
          {"input_channels", s.input_channels()}};
}

inline ArchitectureSpace space_from_json(const nlohmann::json& j) {
  try {
    std::vector<LayerSpec> layers;
    for (const auto& l : j.at("layers"))
      layers.push_back({parse_layer_kind(l.at("kind").get<std::string>()), l.at("kernel").get<int>(),
                        l.at("stride").get<int>(), l.at("max_in_channels").get<int>(),
                        l.at("max_out_channels").get<int>(), l.at("min_out_channels").get<int>(),
                        l.at("relu").get<bool>(), l.at("block").get<int>()});
    return ArchitectureSpace(std::move(layers), j.at("tie_groups").get<std::vector<std::vector<int>>>(),
                             j.at("droppable_blocks").get<std::vector<int>>(), j.at("spatial_max").get<int>(),
                             j.at("spatial_min").get<int>(), j.at("min_depth").get<int>(),
                             j.at("input_channels").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("space description: ") + e.what());
  }
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64s(std::string& out, const std::vector<double>& v) {
  for (double x : v) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : d_(data) {}
  void need(std::size_t n) const {
    if (pos_ + n > d_.size()) throw ConfigError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  void f64s(std::vector<double>& v) {
    for (auto& x : v) x = std::bit_cast<double>(uint(8));
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& d_;
  std::size_t pos_ = 0;
};

inline std::uint32_t kind_code(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return 0;
    case LayerKind::depthwise_conv: return 1;
    case LayerKind::dense: return 2;
  }
  return 0;
}

}  // namespace detail

/// Serializes the store; `metadata` is merged with the space description.
inline std::string encode_checkpoint(const SharedWeightStore& store, nlohmann::json metadata = nlohmann::json::object()) {
  std::string out(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(store.layers().size()));
  for (std::size_t i = 0; i < store.layers().size(); ++i) {
    const auto& p = store.layers()[i];
    detail::put_u32(out, detail::kind_code(store.space().layer(i).kind));
    detail::put_u32(out, static_cast<std::uint32_t>(p.out));
    detail::put_u32(out, static_cast<std::uint32_t>(p.in));
    detail::put_u32(out, static_cast<std::uint32_t>(p.kernel));
    detail::put_f64s(out, p.weight);
    detail::put_f64s(out, p.bias);
    detail::put_f64s(out, p.weight_velocity);
    detail::put_f64s(out, p.bias_velocity);
  }
  metadata["space"] = space_to_json(store.space());
  const std::string meta = metadata.dump();
  detail::put_u64(out, meta.size());
  out += meta;
  return out;
}

struct Checkpoint {
  SharedWeightStore store;
  nlohmann::json metadata;
};

inline Checkpoint decode_checkpoint(const std::string& data) {
  detail::Reader r(data);
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw ConfigError("not a store checkpoint (bad magic)");
  const auto version = r.uint(4);
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.uint(4);
  struct Raw {
    std::uint64_t kind, out, in, kernel;
    std::vector<double> w, b, wv, bv;
  };
  std::vector<Raw> raw;
  for (std::uint64_t i = 0; i < count; ++i) {
    Raw l;
    l.kind = r.uint(4);
    l.out = r.uint(4);
    l.in = r.uint(4);
    l.kernel = r.uint(4);
    const std::size_t n = l.out * l.in * l.kernel * l.kernel;
    r.need(n * 8);
    l.w.resize(n);
    l.b.resize(l.out);
    l.wv.resize(n);
    l.bv.resize(l.out);
    r.f64s(l.w);
    r.f64s(l.b);
    r.f64s(l.wv);
    r.f64s(l.bv);
    raw.push_back(std::move(l));
  }
  const auto meta_len = r.uint(8);
  Checkpoint c;
  try {
    c.metadata = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint metadata: ") + e.what());
  }
  if (!c.metadata.contains("space")) throw ConfigError("checkpoint metadata lacks a space description");
  c.store = SharedWeightStore::zeros(space_from_json(c.metadata["space"]));
  if (c.store.layers().size() != raw.size()) throw ShapeError("checkpoint layer count disagrees with its space");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& p = c.store.layers()[i];
    const auto& l = raw[i];
    if (l.kind != detail::kind_code(c.store.space().layer(i).kind) || static_cast<int>(l.out) != p.out ||
        static_cast<int>(l.in) != p.in || static_cast<int>(l.kernel) != p.kernel)
      throw ShapeError("checkpoint layer " + std::to_string(i) + " shape disagrees with its space");
    p.weight = l.w;
    p.bias = l.b;
    p.weight_velocity = l.wv;
    p.bias_velocity = l.bv;
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const SharedWeightStore& store,
                            nlohmann::json metadata = nlohmann::json::object()) {
  const std::string bytes = encode_checkpoint(store, std::move(metadata));
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write checkpoint '" + path + "'");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot move checkpoint into '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(data);
}

}  // namespace mdprune
