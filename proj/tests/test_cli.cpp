#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mdprune/latency_table.hpp"
#include "mdprune/trace.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

const fs::path& workdir() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / ("mdprune_cli_test_" + std::to_string(getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Result cli(const std::string& args, const std::string& env = "") {
  const auto out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = env + " " + MDPRUNE_CLI + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const char* kConfig = R"(schema_version = 1
[data]
classes = 3
samples_per_class = 30
s_max = 8
channels = 2
seed = 1
[space]
width = 6
droppable_blocks = 2
[constraint]
target_fraction = 0.5
[optimizer]
outer_iterations = 3
weight_iterations = 4
samples = 5
vector_updates_per_outer = 2
sigma_initial = 0.05
sigma_final = 0.02
alpha_initial = 0.01
alpha_final = 0
batch_size = 8
eval_subset = 12
seed = 2
[output]
trace = run/trace.jsonl
architecture = run/architecture.json
checkpoint = run/checkpoint.bin
)";

// Runs optimize once and shares the artifacts between tests.
const fs::path& run_dir() {
  static const fs::path d = [] {
    const auto dir = workdir() / "opt";
    fs::create_directories(dir / "run");
    std::ofstream(dir / "run.cfg") << kConfig;
    const auto r = cli("optimize --config " + (dir / "run.cfg").string(), "MDPRUNE_LOG=quiet");
    if (r.code != 0) throw std::runtime_error("optimize failed: " + r.err);
    std::ofstream(dir / "optimize_stdout.json") << r.out;
    return dir;
  }();
  return d;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("optimize").code, 1);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, MissingOrBadConfigExitsOne) {
  auto r = cli("optimize --config " + (workdir() / "nope.cfg").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("cannot open"), std::string::npos) << r.err;
  const auto bad = workdir() / "bad.cfg";
  std::ofstream(bad) << "schema_version = 1\n[optimizer]\nsamples = 0\n[constraint]\ntarget = 5\n";
  r = cli("optimize --config " + bad.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("optimizer.samples"), std::string::npos) << r.err;
}

TEST(Cli, OptimizeWritesThreeArtifacts) {
  const auto& d = run_dir();
  EXPECT_TRUE(fs::exists(d / "run/trace.jsonl"));
  EXPECT_TRUE(fs::exists(d / "run/architecture.json"));
  EXPECT_TRUE(fs::exists(d / "run/checkpoint.bin"));
  const auto arch = nlohmann::json::parse(slurp(d / "run/architecture.json"));
  for (const char* k : {"out_channels", "spatial", "depth", "cost", "metric"}) EXPECT_TRUE(arch.contains(k)) << k;
  EXPECT_EQ(nlohmann::json::parse(slurp(d / "optimize_stdout.json")), arch);
  const auto trace = mdprune::read_trace((d / "run/trace.jsonl").string());
  EXPECT_FALSE(trace.truncated);
  ASSERT_EQ(trace.records.size(), 3u);
  EXPECT_EQ(mdprune::config_from_json(arch), trace.records.back().config);
}

TEST(Cli, EvaluateReproducesTheLastTraceRecord) {
  const auto& d = run_dir();
  const auto last = mdprune::read_trace((d / "run/trace.jsonl").string()).records.back();
  std::string vec;
  char buf[40];
  for (double x : last.mu) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    vec += (vec.empty() ? "" : ",") + std::string(buf);
  }
  const auto r = cli("evaluate --checkpoint " + (d / "run/checkpoint.bin").string() + " --vector " + vec);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["loss"].get<double>(), last.loss, 1e-9);
  EXPECT_NEAR(j["error"].get<double>(), last.error, 1e-9);
  EXPECT_EQ(j["cost"].get<double>(), last.cost);
  EXPECT_EQ(mdprune::config_from_json(j["config"]), last.config);

  const auto zero = cli("evaluate --checkpoint " + (d / "run/checkpoint.bin").string() + " --rho 0 --vector " + vec);
  const auto z = nlohmann::json::parse(zero.out);
  EXPECT_EQ(z["error"].get<double>(), z["loss"].get<double>());
}

TEST(Cli, EvaluateMaximalConfigCostsFullFlops) {
  const auto& d = run_dir();
  // Stem 2->6 at 8 (out 4), two blocks of 6->6 convs at 4, dense 6->3.
  const double full = 9.0 * 2 * 6 * 16 + 4 * 9.0 * 6 * 6 * 16 + 18.0;
  const auto r = cli("evaluate --checkpoint " + (d / "run/checkpoint.bin").string() +
                     " --config '{\"out_channels\":[6,6,6,6,6,3],\"spatial\":8,\"depth\":2}'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["cost"].get<double>(), full);
}

TEST(Cli, EvaluateRejectsBadInput) {
  const auto& d = run_dir();
  const auto ck = (d / "run/checkpoint.bin").string();
  EXPECT_EQ(cli("evaluate --checkpoint " + ck + " --vector 1,1").code, 1);
  EXPECT_EQ(cli("evaluate --checkpoint " + ck + " --vector 1,x,1").code, 1);
  EXPECT_EQ(cli("evaluate --checkpoint " + ck).code, 1);
  EXPECT_EQ(cli("evaluate --checkpoint " + ck + " --config '{\"out_channels\":[6,5,4,6,6,3],\"spatial\":8,\"depth\":2}'").code, 1);
  const auto junk = workdir() / "junk.bin";
  std::ofstream(junk) << "not a checkpoint";
  EXPECT_EQ(cli("evaluate --checkpoint " + junk.string() + " --vector 1").code, 1);
}

TEST(Cli, ReportWritesCsvsAndToleratesTruncation) {
  const auto& d = run_dir();
  auto r = cli("report --trace " + (d / "run/trace.jsonl").string() + " --out " + (d / "report").string());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"pruning_ratio.csv", "cost.csv", "k_bound.csv", "architecture.csv"})
    EXPECT_TRUE(fs::exists(d / "report" / f)) << f;
  const auto cut = workdir() / "cut.jsonl";
  const auto text = slurp(d / "run/trace.jsonl");
  std::ofstream(cut) << text.substr(0, text.size() - 40);
  r = cli("report --trace " + cut.string() + " --out " + (workdir() / "cut_report").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos) << r.err;
  EXPECT_EQ(cli("report --trace " + (workdir() / "none.jsonl").string() + " --out x").code, 1);
}

TEST(Cli, LutValidateAndFill) {
  const auto in = workdir() / "lut.csv";
  std::ofstream(in) << mdprune::kLatencyCsvHeader << "\n0,3,8,4,10\n0,3,24,4,30\n0,3,8,8,5\n0,3,24,8,5\n0,3,16,8,5\n";
  auto r = cli("lut validate --in " + in.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "5 rows, 1 layers, 1 gaps\n");
  r = cli("lut validate --in " + in.string(), "MDPRUNE_LOG=debug");
  EXPECT_NE(r.out.find("gap (0,3,16,4)"), std::string::npos) << r.out;
  const auto out = workdir() / "filled.csv";
  r = cli("lut fill --in " + in.string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto filled = mdprune::load_latency_csv(out.string());
  EXPECT_EQ(filled.size(), 6u);
  EXPECT_DOUBLE_EQ(filled.lookup({0, 3, 16, 4}), 20.0);

  const auto dup = workdir() / "dup.csv";
  std::ofstream(dup) << mdprune::kLatencyCsvHeader << "\n0,3,8,4,10\n0,3,8,4,11\n";
  r = cli("lut validate --in " + dup.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  EXPECT_EQ(cli("lut check --in " + in.string()).code, 1);
}

TEST(Cli, ResumeAfterCompletionIsANoOp) {
  const auto& d = run_dir();
  const auto before = slurp(d / "run/trace.jsonl");
  const auto r = cli("optimize --resume --config " + (d / "run.cfg").string(), "MDPRUNE_LOG=quiet");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(d / "run/trace.jsonl"), before);
}
