#pragma once

// Run configuration file: flat sectioned key = value text.
//
//   schema_version = 1
//   [space]       backbone, width, droppable_blocks, convs_per_block, or
//                 repeated `layer = KIND k=.. stride=.. in=.. out=.. [min=..] [relu] [block=..]`
//                 with tie_group (repeatable), droppable, input_channels;
//                 spatial_min, min_depth
//   [constraint]  metric, target | target_fraction, rho, initial_penalty,
//                 penalty_form, cost_unit, latency_table
//   [optimizer]   outer_iterations, weight_iterations, samples,
//                 vector_updates_per_outer, sigma_initial, sigma_final,
//                 alpha_initial, alpha_final, baseline, seed, eval_subset,
//                 batch_size, learning_rate, momentum, weight_decay
//   [data]        classes, samples_per_class, s_max, channels, val_fraction,
//                 noise_std, phase_jitter, seed
//   [output]      trace, architecture, checkpoint
//
// `#` starts a comment. Unknown sections and keys are errors. Relative paths
// resolve against the directory of the config file.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mdprune/cost_model.hpp"
#include "mdprune/dataset.hpp"
#include "mdprune/errors.hpp"
#include "mdprune/latency_table.hpp"
#include "mdprune/optimizer.hpp"
#include "mdprune/pruning_space.hpp"
#include "mdprune/resource_cost.hpp"
#include "mdprune/trainer.hpp"

namespace mdprune {

inline constexpr int kRunConfigSchemaVersion = 1;

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parsed text: section name ("" for the preamble) to entries in file order.
using ConfigDocument = std::map<std::string, std::vector<ConfigEntry>>;

inline ConfigDocument parse_config_document(std::istream& is) {
  ConfigDocument doc;
  doc[""];
  std::string section, raw;
  int n = 0;
  while (std::getline(is, raw)) {
    ++n;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(n) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (doc.count(section) && !doc[section].empty())
        throw ConfigError("line " + std::to_string(n) + ": section [" + section + "] repeated");
      doc[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    doc[section].push_back({detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), n});
  }
  return doc;
}

namespace detail {

/// Typed access to one section; every key must be consumed exactly once
/// (or via `all` for repeatable keys).
class SectionReader {
 public:
  SectionReader(std::string name, const std::vector<ConfigEntry>* entries) : name_(std::move(name)), entries_(entries) {}

  bool present() const { return entries_ != nullptr; }

  const ConfigEntry* find(const std::string& key) {
    used_.insert(key);
    if (!entries_) return nullptr;
    const ConfigEntry* hit = nullptr;
    for (const auto& e : *entries_)
      if (e.key == key) {
        if (hit) throw ConfigError(where(e) + "key '" + qualified(key) + "' repeated");
        hit = &e;
      }
    return hit;
  }

  std::vector<const ConfigEntry*> all(const std::string& key) {
    used_.insert(key);
    std::vector<const ConfigEntry*> out;
    if (entries_)
      for (const auto& e : *entries_)
        if (e.key == key) out.push_back(&e);
    return out;
  }

  std::optional<std::string> text(const std::string& key) {
    if (const auto* e = find(key)) return e->value;
    return std::nullopt;
  }

  template <class T>
  std::optional<T> number(const std::string& key, T lo, T hi) {
    const auto* e = find(key);
    if (!e) return std::nullopt;
    T v{};
    if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t pos = 0;
        v = static_cast<T>(std::stod(e->value, &pos));
        if (pos != e->value.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ConfigError(where(*e) + "'" + qualified(key) + "' is not a number: '" + e->value + "'");
      }
    } else {
      const char* end = e->value.data() + e->value.size();
      const auto r = std::from_chars(e->value.data(), end, v);
      if (r.ec != std::errc() || r.ptr != end)
        throw ConfigError(where(*e) + "'" + qualified(key) + "' is not an integer: '" + e->value + "'");
    }
    if (!(v >= lo && v <= hi)) {
      std::ostringstream os;
      os << where(*e) << "'" << qualified(key) << "' = " << e->value << " outside [" << lo << ", " << hi << "]";
      throw ConfigError(os.str());
    }
    return v;
  }

  template <class T>
  void set(const std::string& key, T& out, T lo, T hi) {
    if (auto v = number<T>(key, lo, hi)) out = *v;
  }

  void reject_unknown() const {
    if (!entries_) return;
    for (const auto& e : *entries_)
      if (!used_.count(e.key)) throw ConfigError(where(e) + "unknown key '" + qualified(e.key) + "'");
  }

  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
  static std::string where(const ConfigEntry& e) { return "line " + std::to_string(e.line) + ": "; }

 private:
  std::string name_;
  const std::vector<ConfigEntry>* entries_;
  std::set<std::string> used_;
};

inline std::vector<int> parse_int_list(const ConfigEntry& e, const std::string& qualified) {
  std::vector<int> out;
  std::string s = e.value;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) {
    int v = 0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
      throw ConfigError(SectionReader::where(e) + "'" + qualified + "' expects integers, got '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

/// `conv k=3 stride=2 in=3 out=24 min=3 relu block=0`
inline LayerSpec parse_layer_line(const ConfigEntry& e) {
  std::istringstream is(e.value);
  std::string kind;
  is >> kind;
  LayerSpec l;
  try {
    l.kind = parse_layer_kind(kind);
  } catch (const ConfigError& err) {
    throw ConfigError(SectionReader::where(e) + "space.layer: " + err.what());
  }
  l.kernel = l.kind == LayerKind::dense ? 1 : 3;
  l.has_relu = false;
  l.min_out_channels = 0;
  std::string tok;
  while (is >> tok) {
    if (tok == "relu") {
      l.has_relu = true;
      continue;
    }
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError(SectionReader::where(e) + "space.layer: bad token '" + tok + "'");
    const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
    int x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
      throw ConfigError(SectionReader::where(e) + "space.layer: '" + k + "' expects an integer");
    if (k == "k") l.kernel = x;
    else if (k == "stride") l.stride = x;
    else if (k == "in") l.max_in_channels = x;
    else if (k == "out") l.max_out_channels = x;
    else if (k == "min") l.min_out_channels = x;
    else if (k == "block") l.block_id = x;
    else throw ConfigError(SectionReader::where(e) + "space.layer: unknown attribute '" + k + "'");
  }
  if (l.min_out_channels == 0) l.min_out_channels = default_min_channels(l.max_out_channels);
  return l;
}

}  // namespace detail

/// Everything needed to run the optimizer end to end.
struct RunConfig {
  std::string source_text;
  std::filesystem::path base_dir;

  ArchitectureSpace space;
  DatasetSpec data;
  OptimizerConfig optimizer;
  TrainParams train;
  int eval_subset = 512;
  std::string latency_table;  // resolved path, empty for FLOPs

  std::filesystem::path trace_path;
  std::filesystem::path architecture_path;
  std::filesystem::path checkpoint_path;

  CostModel cost_model() const {
    if (optimizer.constraint.metric == CostMetric::latency)
      return CostModel::latency_model(space, load_latency_csv(latency_table));
    return CostModel::flops_model(space);
  }
};

inline RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = ".") {
  std::istringstream is(text);
  const auto doc = parse_config_document(is);
  static const std::set<std::string> kSections{"", "space", "constraint", "optimizer", "data", "output"};
  for (const auto& [name, entries] : doc)
    if (!kSections.count(name)) {
      const int line = entries.empty() ? 0 : entries.front().line;
      throw ConfigError("unknown section [" + name + "]" + (line ? " near line " + std::to_string(line) : ""));
    }
  auto section = [&](const std::string& name) {
    const auto it = doc.find(name);
    return detail::SectionReader(name, it == doc.end() ? nullptr : &it->second);
  };
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base_dir / q;
  };

  RunConfig rc;
  rc.source_text = text;
  rc.base_dir = base_dir;

  auto pre = section("");
  const auto version = pre.number<int>("schema_version", 0, 1 << 30);
  if (!version) throw ConfigError("missing required key 'schema_version'");
  if (*version != kRunConfigSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(*version));
  pre.reject_unknown();

  auto data = section("data");
  data.set("classes", rc.data.num_classes, 2, 1000);
  data.set("samples_per_class", rc.data.samples_per_class, 2, 100000);
  data.set("s_max", rc.data.s_max, 1, 256);
  data.set("channels", rc.data.channels, 1, 64);
  data.set("val_fraction", rc.data.val_fraction, 0.0, 1.0);
  data.set("noise_std", rc.data.noise_std, 0.0, 100.0);
  data.set("phase_jitter", rc.data.phase_jitter, 0.0, 100.0);
  data.set<std::uint64_t>("seed", rc.data.seed, 0, UINT64_MAX);
  data.reject_unknown();

  auto sp = section("space");
  const auto layer_lines = sp.all("layer");
  const auto backbone = sp.text("backbone");
  if (!layer_lines.empty())
    for (const char* k : {"backbone", "width", "droppable_blocks", "convs_per_block"})
      if (sp.find(k))
        throw ConfigError(std::string("space: give either backbone keys ('space.") + k +
                          "') or 'space.layer' lines, not both");
  if (layer_lines.empty()) {
    if (backbone && *backbone != "tiny") throw ConfigError("unknown value for 'space.backbone': '" + *backbone + "'");
    BackboneSpec b;
    b.input_channels = rc.data.channels;
    b.num_classes = rc.data.num_classes;
    b.spatial_max = rc.data.s_max;
    sp.set("width", b.width, 1, 4096);
    sp.set("droppable_blocks", b.droppable_blocks, 0, 64);
    sp.set("convs_per_block", b.convs_per_block, 1, 16);
    auto base = make_backbone(b);
    int smin = base.spatial_min(), dmin = base.min_depth();
    sp.set("spatial_min", smin, 1, b.spatial_max);
    sp.set("min_depth", dmin, 0, b.droppable_blocks);
    rc.space = ArchitectureSpace(base.layers(), base.tie_groups(), base.droppable_blocks(), b.spatial_max, smin, dmin,
                                 b.input_channels);
  } else {
    std::vector<LayerSpec> layers;
    for (const auto* e : layer_lines) layers.push_back(detail::parse_layer_line(*e));
    std::vector<std::vector<int>> ties;
    for (const auto* e : sp.all("tie_group")) ties.push_back(detail::parse_int_list(*e, "space.tie_group"));
    std::vector<int> droppable;
    if (const auto* e = sp.find("droppable")) droppable = detail::parse_int_list(*e, "space.droppable");
    int input_channels = rc.data.channels;
    sp.set("input_channels", input_channels, 1, 4096);
    int smin = default_spatial_min(rc.data.s_max), dmin = std::min<int>(1, static_cast<int>(droppable.size()));
    sp.set("spatial_min", smin, 1, rc.data.s_max);
    sp.set("min_depth", dmin, 0, static_cast<int>(droppable.size()));
    rc.space = ArchitectureSpace(std::move(layers), std::move(ties), std::move(droppable), rc.data.s_max, smin, dmin,
                                 input_channels);
    if (rc.space.layers().back().kind != LayerKind::dense ||
        rc.space.layers().back().max_out_channels != rc.data.num_classes)
      throw ConfigError("space: last layer must be dense with data.classes outputs");
  }
  sp.reject_unknown();

  auto con = section("constraint");
  if (!con.present()) throw ConfigError("missing required key 'constraint.target' (no [constraint] section)");
  auto& c = rc.optimizer.constraint;
  if (auto m = con.text("metric")) {
    if (*m == "flops") c.metric = CostMetric::flops;
    else if (*m == "latency") c.metric = CostMetric::latency;
    else throw ConfigError("unknown value for 'constraint.metric': '" + *m + "'");
  }
  if (auto f = con.text("penalty_form")) {
    if (*f == "outside") c.form = PenaltyForm::coefficient_outside;
    else if (*f == "inside") c.form = PenaltyForm::coefficient_inside;
    else throw ConfigError("unknown value for 'constraint.penalty_form': '" + *f + "'");
  }
  if (auto p = con.text("latency_table")) rc.latency_table = resolve(*p).string();
  if (c.metric == CostMetric::latency && rc.latency_table.empty())
    throw ConfigError("missing required key 'constraint.latency_table' for metric latency");
  const double max_cost = rc.cost_model()(rc.space.maximal_config());
  const auto target = con.number<double>("target", 0.0, 1e300);
  const auto fraction = con.number<double>("target_fraction", 0.0, 1.0);
  if (target && fraction) throw ConfigError("constraint: give 'constraint.target' or 'constraint.target_fraction', not both");
  if (!target && !fraction) throw ConfigError("missing required key 'constraint.target'");
  c.target = target ? *target : *fraction * max_cost;
  const auto unit = con.text("cost_unit");
  if (!unit || *unit == "auto") c.cost_unit = 1.0 / max_cost;
  else c.cost_unit = *con.number<double>("cost_unit", 1e-300, 1e300);
  double initial_penalty = 10.0;
  con.set("initial_penalty", initial_penalty, 1e-12, 1e12);
  const auto rho = con.text("rho");
  if (!rho || *rho == "auto") c.rho = rho_for_initial_penalty(max_cost, c, initial_penalty);
  else c.rho = *con.number<double>("rho", 1e-300, 1e300);
  con.reject_unknown();
  c.validate();

  auto op = section("optimizer");
  auto& o = rc.optimizer;
  op.set("outer_iterations", o.outer_iterations, 1, 1000000);
  op.set("weight_iterations", o.weight_iterations, 1, 100000000);
  op.set("samples", o.samples, 1, 1000000);
  op.set("vector_updates_per_outer", o.vector_updates_per_outer, 1, 100000);
  o.sigma_schedule.total_steps = o.outer_iterations;
  o.alpha_schedule.total_steps = o.outer_iterations;
  op.set("sigma_initial", o.sigma_schedule.initial, 1e-12, 10.0);
  op.set("sigma_final", o.sigma_schedule.final_value, 1e-12, 10.0);
  op.set("alpha_initial", o.alpha_schedule.initial, 0.0, 1e6);
  op.set("alpha_final", o.alpha_schedule.final_value, 0.0, 1e6);
  if (auto b = op.text("baseline")) {
    if (*b == "mean_error") o.baseline = Baseline::mean_error;
    else if (*b == "none") o.baseline = Baseline::none;
    else throw ConfigError("unknown value for 'optimizer.baseline': '" + *b + "'");
  }
  op.set<std::uint64_t>("seed", o.seed, 0, UINT64_MAX);
  op.set("eval_subset", rc.eval_subset, 1, 100000000);
  rc.train.iterations = o.weight_iterations;
  op.set("batch_size", rc.train.batch_size, 1, 100000);
  op.set("learning_rate", rc.train.sgd.lr, 0.0, 100.0);
  op.set("momentum", rc.train.sgd.momentum, 0.0, 0.999999);
  op.set("weight_decay", rc.train.sgd.weight_decay, 0.0, 1.0);
  op.reject_unknown();
  o.validate();

  auto out = section("output");
  rc.trace_path = resolve(out.text("trace").value_or("trace.jsonl"));
  rc.architecture_path = resolve(out.text("architecture").value_or("architecture.json"));
  rc.checkpoint_path = resolve(out.text("checkpoint").value_or("checkpoint.bin"));
  out.reject_unknown();
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace mdprune
