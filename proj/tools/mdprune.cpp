// mdprune command-line interface.
//
// Exit codes: 0 success, 1 configuration or input error, 2 runtime error.
// MDPRUNE_LOG=quiet|info|debug sets stderr verbosity (default info).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdprune/checkpoint.hpp"
#include "mdprune/errors.hpp"
#include "mdprune/latency_table.hpp"
#include "mdprune/pipeline.hpp"
#include "mdprune/report.hpp"
#include "mdprune/run_config.hpp"
#include "mdprune/trace.hpp"

namespace {

using namespace mdprune;

enum class Level { quiet = 0, info = 1, debug = 2 };

Level log_level() {
  const char* v = std::getenv("MDPRUNE_LOG");
  if (!v) return Level::info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return Level::quiet;
  if (s == "debug" || s == "2") return Level::debug;
  return Level::info;
}

void log(Level at, const std::string& msg) {
  if (static_cast<int>(log_level()) >= static_cast<int>(at)) std::cerr << msg << '\n';
}

std::string slurp_or_literal(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) {
    std::ifstream is(arg);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }
  return arg;
}

PruningVector parse_vector(const std::string& arg) {
  std::vector<double> v;
  for (const auto& f : detail::split(detail::trim(slurp_or_literal(arg)), ',')) {
    double x = 0.0;
    if (!detail::parse_number(f, x)) throw ConfigError("--vector: '" + f + "' is not a number");
    v.push_back(x);
  }
  return PruningVector(std::move(v));
}

int cmd_optimize(const std::string& config_path, bool resume) {
  const auto rc = load_run_config(config_path);
  log(Level::info, "optimize: K=" + std::to_string(rc.optimizer.outer_iterations) +
                       " N=" + std::to_string(rc.optimizer.weight_iterations) +
                       " M=" + std::to_string(rc.optimizer.samples) + " target=" +
                       detail::fmt(rc.optimizer.constraint.target) + " rho=" + detail::fmt(rc.optimizer.constraint.rho));
  PipelineOptions opt;
  opt.resume = resume;
  opt.progress = [](const TraceRecord& r) {
    log(Level::info, "step " + std::to_string(r.outer_step) + " cost " + detail::fmt(r.cost) + " loss " +
                         detail::fmt(r.loss) + " error " + detail::fmt(r.error));
    if (log_level() == Level::debug) log(Level::debug, "  mu " + nlohmann::json(r.mu).dump());
  };
  const auto res = run_pipeline(rc, opt);
  std::cout << architecture_json(res.config, res.cost, rc.optimizer.constraint.metric).dump() << '\n';
  log(Level::info, "wrote " + rc.trace_path.string() + ", " + rc.architecture_path.string() + ", " +
                       rc.checkpoint_path.string());
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& vector, const std::string& config,
                 std::optional<double> rho) {
  const auto ck = load_checkpoint(checkpoint);
  PointReport r;
  if (!vector.empty()) {
    r = evaluate_point(ck, parse_vector(vector), rho);
  } else {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(slurp_or_literal(config));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("--config: ") + e.what());
    }
    r = evaluate_point(ck, config_from_json(j), rho);
  }
  std::cout << to_json(r).dump() << '\n';
  return 0;
}

int cmd_report(const std::string& trace_path, const std::string& out_dir) {
  const auto trace = read_trace(trace_path);
  const auto s = write_report(trace, out_dir);
  if (s.truncated) log(Level::quiet, "warning: " + s.warning);
  log(Level::info, "report: " + std::to_string(s.rows) + " rows into " + out_dir);
  return 0;
}

int cmd_lut(const std::string& action, const std::string& in, const std::string& out) {
  const auto table = load_latency_csv(in);
  if (action == "validate") {
    std::cout << table.size() << " rows, " << table.layer_ids().size() << " layers, " << table.gap_count()
              << " gaps\n";
    if (log_level() == Level::debug)
      for (int id : table.layer_ids())
        for (const auto& k : table.gaps(id)) std::cout << "gap " << to_string(k) << '\n';
    return 0;
  }
  const auto filled = fill_missing(table);
  if (out.empty()) {
    write_latency_csv(std::cout, filled);
  } else {
    save_latency_csv(out, filled);
    log(Level::info, "lut fill: " + std::to_string(filled.size() - table.size()) + " rows added, wrote " + out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint multi-dimension pruning of a weight-shared network"};
  app.require_subcommand(1);

  std::string config_path;
  bool resume = false;
  auto* optimize = app.add_subcommand("optimize", "Run the alternating optimization");
  optimize->add_option("--config", config_path, "Run configuration file")->required();
  optimize->add_flag("--resume", resume, "Continue from the configured checkpoint");

  std::string checkpoint, vector, arch;
  double rho = 0.0;
  auto* evaluate = app.add_subcommand("evaluate", "Loss, cost and penalized error at one point");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint written by optimize")->required();
  auto* vopt = evaluate->add_option("--vector", vector, "Pruning vector: comma-separated values or a file");
  auto* copt = evaluate->add_option("--config", arch, "Architecture JSON: literal or a file");
  vopt->excludes(copt);
  auto* ropt = evaluate->add_option("--rho", rho, "Override the regularization coefficient");

  std::string trace_path, out_dir;
  auto* report = app.add_subcommand("report", "Plot-data CSVs from a trace");
  report->add_option("--trace", trace_path, "Trace file")->required();
  report->add_option("--out", out_dir, "Output directory")->required();

  std::string lut_action, lut_in, lut_out;
  auto* lut = app.add_subcommand("lut", "Latency lookup table tools");
  lut->add_option("action", lut_action, "validate or fill")->required()->check(CLI::IsMember({"validate", "fill"}));
  lut->add_option("--in", lut_in, "Table CSV")->required();
  lut->add_option("--out", lut_out, "Output CSV for fill (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*optimize) return cmd_optimize(config_path, resume);
    if (*evaluate) {
      if (vector.empty() && arch.empty()) throw ConfigError("evaluate: give --vector or --config");
      return cmd_evaluate(checkpoint, vector, arch, *ropt ? std::optional<double>(rho) : std::nullopt);
    }
    if (*report) return cmd_report(trace_path, out_dir);
    if (*lut) return cmd_lut(lut_action, lut_in, lut_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
