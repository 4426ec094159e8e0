#pragma once

// Optimizer trace: one JSON object per line, one line per outer step.
//
// Schema version 1 fields:
//   schema_version  1
//   outer_step      t, 0-based, strictly increasing
//   sigma, alpha    schedule values used at step t
//   train_loss      mean loss of the weight phase (0 without training)
//   updates         [{ "samples": [[error, cost], ...] (M pairs, in sample order),
//                      "grad_norm": ||g||, "error_at_mu": E(mu) on the update's subset }]
//   grad_norm       norm of the last update's gradient
//   k_lower_bound   running Lipschitz lower bound after step t
//   mu              pruning vector after the step's updates
//   config          {"out_channels": [...], "spatial": s, "depth": d} = round_to_config(mu)
//   cost            cost of config
//   loss, error     full-validation loss and penalized error of mu
//   metric, target  constraint echo

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdprune/cost_model.hpp"
#include "mdprune/errors.hpp"
#include "mdprune/pruning_space.hpp"

namespace mdprune {

inline constexpr int kTraceSchemaVersion = 1;

struct SampleOutcome {
  double error = 0.0;
  double cost = 0.0;
};

struct UpdateRecord {
  std::vector<SampleOutcome> samples;
  double grad_norm = 0.0;
  double error_at_mu = 0.0;
};

struct TraceRecord {
  int outer_step = 0;
  double sigma = 0.0;
  double alpha = 0.0;
  double train_loss = 0.0;
  std::vector<UpdateRecord> updates;
  double grad_norm = 0.0;
  double k_lower_bound = 0.0;
  std::vector<double> mu;
  ArchitectureConfig config;
  double cost = 0.0;
  double loss = 0.0;
  double error = 0.0;
  std::string metric = "flops";
  double target = 0.0;
};

inline nlohmann::json config_to_json(const ArchitectureConfig& c) {
  return {{"out_channels", c.out_channels}, {"spatial", c.spatial}, {"depth", c.depth}};
}

inline ArchitectureConfig config_from_json(const nlohmann::json& j) {
  try {
    return {j.at("out_channels").get<std::vector<int>>(), j.at("spatial").get<int>(), j.at("depth").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const TraceRecord& r) {
  nlohmann::json updates = nlohmann::json::array();
  for (const auto& u : r.updates) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : u.samples) samples.push_back({s.error, s.cost});
    updates.push_back({{"samples", samples}, {"grad_norm", u.grad_norm}, {"error_at_mu", u.error_at_mu}});
  }
  return {{"schema_version", kTraceSchemaVersion},
          {"outer_step", r.outer_step},
          {"sigma", r.sigma},
          {"alpha", r.alpha},
          {"train_loss", r.train_loss},
          {"updates", updates},
          {"grad_norm", r.grad_norm},
          {"k_lower_bound", r.k_lower_bound},
          {"mu", r.mu},
          {"config", config_to_json(r.config)},
          {"cost", r.cost},
          {"loss", r.loss},
          {"error", r.error},
          {"metric", r.metric},
          {"target", r.target}};
}

inline TraceRecord trace_record_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kTraceSchemaVersion)
    throw ConfigError("trace: unsupported schema_version " + j.value("schema_version", nlohmann::json()).dump());
  TraceRecord r;
  try {
    r.outer_step = j.at("outer_step").get<int>();
    r.sigma = j.at("sigma").get<double>();
    r.alpha = j.at("alpha").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    for (const auto& u : j.at("updates")) {
      UpdateRecord ur;
      for (const auto& s : u.at("samples")) ur.samples.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
      ur.grad_norm = u.at("grad_norm").get<double>();
      ur.error_at_mu = u.at("error_at_mu").get<double>();
      r.updates.push_back(std::move(ur));
    }
    r.grad_norm = j.at("grad_norm").get<double>();
    r.k_lower_bound = j.at("k_lower_bound").get<double>();
    r.mu = j.at("mu").get<std::vector<double>>();
    r.config = config_from_json(j.at("config"));
    r.cost = j.at("cost").get<double>();
    r.loss = j.at("loss").get<double>();
    r.error = j.at("error").get<double>();
    r.metric = j.at("metric").get<std::string>();
    r.target = j.at("target").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trace record: ") + e.what());
  }
  return r;
}

/// Appends records to a JSON-lines file, flushing after each line.
class TraceWriter {
 public:
  TraceWriter(const std::string& path, bool append) : path_(path) {
    os_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!os_) throw ConfigError("cannot write trace '" + path + "'");
  }

  void write(const TraceRecord& r) {
    os_ << to_json(r).dump() << '\n';
    os_.flush();
    if (!os_) throw Error("write to trace '" + path_ + "' failed");
  }

 private:
  std::string path_;
  std::ofstream os_;
};

struct TraceFile {
  std::vector<TraceRecord> records;
  /// Set when reading stopped at an unparsable or incomplete line.
  bool truncated = false;
  int bad_line = 0;
  std::string problem;
};

/// Reads records until the first line that does not parse; earlier records
/// are kept and the file is flagged as truncated.
inline TraceFile read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open trace '" + path + "'");
  TraceFile t;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto r = trace_record_from_json(nlohmann::json::parse(line));
      if (!t.records.empty() && r.outer_step <= t.records.back().outer_step)
        throw ConfigError("outer_step not increasing");
      t.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      t.truncated = true;
      t.bad_line = n;
      t.problem = e.what();
      break;
    }
  }
  return t;
}

}  // namespace mdprune
