#pragma once

// Per-layer latency lookup table.
//
// CSV layout (UTF-8):
//   # hardware: <label>          optional metadata lines before the header
//   # batch_size: <n>
//   layer_id,in_channels,out_channels,spatial_in,latency_us
//   0,3,24,16,12.5
//
// Network latency is the sum of the per-layer entries of the active layers.
// Keys between measured rows are resolved by multilinear interpolation over
// the layer's (in_channels, out_channels, spatial_in) grid; keys outside the
// measured range of a layer are refused.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mdprune/cost_model.hpp"
#include "mdprune/errors.hpp"

namespace mdprune {

struct LatencyKey {
  int layer_id = 0;
  int in_channels = 0;
  int out_channels = 0;
  int spatial_in = 0;

  friend auto operator<=>(const LatencyKey&, const LatencyKey&) = default;
};

inline std::string to_string(const LatencyKey& k) {
  return "(" + std::to_string(k.layer_id) + "," + std::to_string(k.in_channels) + "," +
         std::to_string(k.out_channels) + "," + std::to_string(k.spatial_in) + ")";
}

class LatencyTable {
 public:
  std::string hardware = "unspecified";
  int batch_size = 1;

  /// Throws ConfigError on duplicate keys or non-positive latency.
  void insert(const LatencyKey& key, double latency_us) {
    if (!(latency_us > 0.0) || !std::isfinite(latency_us))
      throw ConfigError("latency for key " + to_string(key) + " must be positive");
    if (!rows_.emplace(key, latency_us).second)
      throw ConfigError("duplicate key " + to_string(key));
  }

  const std::map<LatencyKey, double>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  bool contains(const LatencyKey& k) const { return rows_.count(k) != 0; }

  std::vector<int> layer_ids() const {
    std::set<int> ids;
    for (const auto& [k, v] : rows_) ids.insert(k.layer_id);
    return {ids.begin(), ids.end()};
  }

  /// Sorted unique coordinates of one layer along each axis (in, out, spatial).
  std::array<std::vector<int>, 3> axes(int layer_id) const {
    std::array<std::set<int>, 3> s;
    for (const auto& [k, v] : rows_) {
      if (k.layer_id != layer_id) continue;
      s[0].insert(k.in_channels);
      s[1].insert(k.out_channels);
      s[2].insert(k.spatial_in);
    }
    return {std::vector<int>(s[0].begin(), s[0].end()), std::vector<int>(s[1].begin(), s[1].end()),
            std::vector<int>(s[2].begin(), s[2].end())};
  }

  /// Grid points of a layer (product of its axes) with no row.
  std::vector<LatencyKey> gaps(int layer_id) const {
    const auto ax = axes(layer_id);
    std::vector<LatencyKey> out;
    for (int a : ax[0])
      for (int b : ax[1])
        for (int c : ax[2]) {
          LatencyKey k{layer_id, a, b, c};
          if (!contains(k)) out.push_back(k);
        }
    return out;
  }

  std::size_t gap_count() const {
    std::size_t n = 0;
    for (int id : layer_ids()) n += gaps(id).size();
    return n;
  }

  /// Exact or interpolated latency of one layer configuration.
  double lookup(const LatencyKey& key) const {
    if (auto it = rows_.find(key); it != rows_.end()) return it->second;
    const auto ax = axes(key.layer_id);
    if (ax[0].empty()) throw ExtrapolationError("no latency rows for layer " + std::to_string(key.layer_id));
    const std::array<int, 3> q{key.in_channels, key.out_channels, key.spatial_in};
    std::array<std::array<int, 2>, 3> br{};
    std::array<double, 3> t{};
    for (int a = 0; a < 3; ++a) {
      const auto& v = ax[static_cast<std::size_t>(a)];
      if (q[a] < v.front() || q[a] > v.back())
        throw ExtrapolationError("key " + to_string(key) + " outside the measured range of layer " +
                                 std::to_string(key.layer_id));
      auto hi = std::lower_bound(v.begin(), v.end(), q[a]);
      if (*hi == q[a]) {
        br[a] = {*hi, *hi};
        t[a] = 0.0;
      } else {
        br[a] = {*(hi - 1), *hi};
        t[a] = static_cast<double>(q[a] - br[a][0]) / (br[a][1] - br[a][0]);
      }
    }
    double total = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      double w = 1.0;
      std::array<int, 3> c{};
      for (int a = 0; a < 3; ++a) {
        const int bit = (corner >> a) & 1;
        c[a] = br[a][bit];
        w *= bit ? t[a] : 1.0 - t[a];
      }
      if (w == 0.0) continue;
      const auto it = rows_.find({key.layer_id, c[0], c[1], c[2]});
      if (it == rows_.end())
        throw ExtrapolationError("key " + to_string(key) + " needs missing row " +
                                 to_string({key.layer_id, c[0], c[1], c[2]}) + "; run `lut fill`");
      total += w * it->second;
    }
    return total;
  }

 private:
  std::map<LatencyKey, double> rows_;
};

inline LatencyKey latency_key(const LayerCostSpec& l) {
  return {static_cast<int>(l.layer_id), l.in_channels, l.out_channels, l.spatial_in};
}

/// Sum of per-layer latencies (microseconds) over the active layers.
inline double latency(const ArchitectureConfig& config, const ArchitectureSpace& space,
                      const LatencyTable& table) {
  double total = 0.0;
  for (const auto& l : layer_cost_specs(config, space)) total += table.lookup(latency_key(l));
  return total;
}

/// Completes every layer's grid by repeated 1-D linear interpolation along
/// grid lines. Existing rows are kept. Multilinear latency models are
/// reproduced exactly.
inline LatencyTable fill_missing(const LatencyTable& table) {
  LatencyTable out = table;
  std::map<LatencyKey, double> known(table.rows().begin(), table.rows().end());
  for (int id : table.layer_ids()) {
    const auto ax = table.axes(id);
    auto missing = table.gaps(id);
    while (!missing.empty()) {
      std::vector<LatencyKey> still;
      std::vector<std::pair<LatencyKey, double>> filled;
      for (const auto& k : missing) {
        bool done = false;
        const std::array<int, 3> q{k.in_channels, k.out_channels, k.spatial_in};
        for (int a = 0; a < 3 && !done; ++a) {
          const auto& v = ax[static_cast<std::size_t>(a)];
          if (v.size() < 2) continue;
          // Known points along the grid line through k on axis a.
          std::vector<std::pair<int, double>> line;
          for (int x : v) {
            auto p = q;
            p[a] = x;
            if (auto it = known.find({id, p[0], p[1], p[2]}); it != known.end())
              line.emplace_back(x, it->second);
          }
          if (line.size() < 2) continue;
          auto hi = std::find_if(line.begin(), line.end(), [&](const auto& p) { return p.first > q[a]; });
          std::pair<int, double> p0, p1;
          if (hi == line.begin()) {
            p0 = line[0], p1 = line[1];
          } else if (hi == line.end()) {
            p0 = line[line.size() - 2], p1 = line.back();
          } else {
            p0 = *(hi - 1), p1 = *hi;
          }
          const double t = static_cast<double>(q[a] - p0.first) / (p1.first - p0.first);
          filled.emplace_back(k, p0.second + t * (p1.second - p0.second));
          done = true;
        }
        if (!done) still.push_back(k);
      }
      if (filled.empty())
        throw ConfigError("layer " + std::to_string(id) + " has fewer than 2 rows on a needed axis");
      for (const auto& [k, val] : filled) {
        if (!(val > 0.0))
          throw ConfigError("interpolated latency for " + to_string(k) + " is not positive");
        known.emplace(k, val);
        out.insert(k, val);
      }
      missing = std::move(still);
    }
  }
  return out;
}

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return !s.empty() && end == s.c_str() + s.size();
  } else {
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
  }
}

}  // namespace detail

inline constexpr const char* kLatencyCsvHeader = "layer_id,in_channels,out_channels,spatial_in,latency_us";

/// Parses the CSV format above. Errors carry the 1-based line number.
inline LatencyTable parse_latency_csv(std::istream& in) {
  LatencyTable t;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    const std::string s = detail::trim(line);
    const std::string at = "line " + std::to_string(lineno) + ": ";
    if (s.empty()) continue;
    if (s[0] == '#') {
      const auto colon = s.find(':');
      if (colon == std::string::npos) continue;
      const auto key = detail::trim(s.substr(1, colon - 1));
      const auto val = detail::trim(s.substr(colon + 1));
      if (key == "hardware") t.hardware = val;
      if (key == "batch_size" && !detail::parse_number(val, t.batch_size))
        throw ConfigError(at + "bad batch_size '" + val + "'");
      continue;
    }
    if (!header) {
      if (s != kLatencyCsvHeader)
        throw ConfigError(at + "expected header '" + std::string(kLatencyCsvHeader) + "'");
      header = true;
      continue;
    }
    const auto f = detail::split(s, ',');
    if (f.size() != 5) throw ConfigError(at + "expected 5 fields, got " + std::to_string(f.size()));
    LatencyKey k;
    double us = 0.0;
    if (!detail::parse_number(f[0], k.layer_id) || !detail::parse_number(f[1], k.in_channels) ||
        !detail::parse_number(f[2], k.out_channels) || !detail::parse_number(f[3], k.spatial_in) ||
        !detail::parse_number(f[4], us))
      throw ConfigError(at + "malformed number");
    if (k.layer_id < 0 || k.in_channels < 1 || k.out_channels < 1 || k.spatial_in < 1)
      throw ConfigError(at + "key fields must be positive");
    try {
      t.insert(k, us);
    } catch (const ConfigError& e) {
      throw ConfigError(at + e.what());
    }
  }
  if (!header) throw ConfigError("line " + std::to_string(lineno + 1) + ": missing header");
  return t;
}

inline LatencyTable load_latency_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open latency table '" + path + "'");
  try {
    return parse_latency_csv(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_latency_csv(std::ostream& os, const LatencyTable& t) {
  os << "# hardware: " << t.hardware << "\n# batch_size: " << t.batch_size << "\n"
     << kLatencyCsvHeader << "\n";
  char buf[64];
  for (const auto& [k, v] : t.rows()) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << k.layer_id << ',' << k.in_channels << ',' << k.out_channels << ',' << k.spatial_in << ','
       << buf << '\n';
  }
}

inline void save_latency_csv(const std::string& path, const LatencyTable& t) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write latency table '" + path + "'");
  write_latency_csv(os, t);
}

}  // namespace mdprune
