#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "lhvi_cli.hpp"

using namespace lhvi;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "lhvi");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("lhvi_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(Cli, GenToyHmln) {
  auto r = run({"gen", "--family", "toy-hmln", "--nA", "2", "--nB", "3", "--nBox", "2", "--out", p("a")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["discrete"], 16);
  auto g = graph_from_json(read_json_file(p("a/model.json")));
  EXPECT_EQ(g.num_variables(), 21u);
}

TEST_F(Cli, GenIsByteIdentical) {
  for (const char* d : {"a", "b"})
    ASSERT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "6", "--nBanks", "2", "--evidence-fraction", "0.2", "--seed",
                   "4", "--out", p(d)})
                  .code,
              0);
  EXPECT_EQ(slurp(p("a/model.json")), slurp(p("b/model.json")));
  EXPECT_EQ(slurp(p("a/evidence.json")), slurp(p("b/evidence.json")));
}

TEST_F(Cli, GenRkfCycle) {
  ASSERT_EQ(run({"gen", "--family", "rkf", "--structure", "cycle", "--nWells", "3", "--nSteps", "4", "--out", p("r")}).code, 0);
  auto g = graph_from_json(read_json_file(p("r/model.json")));
  EXPECT_EQ(g.meta().at("structure"), "cycle");
}

TEST_F(Cli, InvalidConfigExits2) {
  auto r = run({"gen", "--family", "nope"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(count_lines(r.err), 1u);
  EXPECT_TRUE(json::parse(r.err).contains("error"));
  EXPECT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "0", "--out", p("x")}).code, 2);
}

// Single Gaussian: the K=1 optimum is exact, so the final objective is -log Z.
TEST_F(Cli, FitMatchesOracleOnGaussian) {
  write_json_file(p("m.json"), to_json(build_graph({{"x", Domain::continuous(), {}}, {"y", Domain::continuous(), {}}},
                                                   {{"f", {"x"}, QuadraticPotential({{0.5}}, {0.3}, 0)},
                                                    {"g", {"y"}, QuadraticPotential({{1.0}}, {-0.2}, 0)}})));
  auto r = run({"fit", "--model", p("m.json"), "--out", p("o"), "--max-iters", "5000", "--obj-tol", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto e = run({"eval", "--fitted", p("o/fitted.json"), "--out", p("o")});
  ASSERT_EQ(e.code, 0) << e.err;
  auto m = read_json_file(p("o/metrics.json"));
  EXPECT_EQ(m["oracle"], "gaussian");
  EXPECT_NEAR(m["bound_gap"].get<double>(), 0.0, 1e-6);
  EXPECT_LT(m["avg_l1_map"].get<double>(), 1e-3);
  EXPECT_GE(m["avg_kl"].get<double>(), 0.0);
}

TEST_F(Cli, LiftedUsesFewerParameters) {
  ASSERT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "8", "--nBanks", "2", "--out", p("g")}).code, 0);
  ASSERT_EQ(run({"fit", "--model", p("g/model.json"), "--mode", "ground", "--max-iters", "20", "--out", p("g0")}).code, 0);
  ASSERT_EQ(run({"fit", "--model", p("g/model.json"), "--mode", "lifted", "--max-iters", "20", "--out", p("g1")}).code, 0);
  auto a = read_json_file(p("g0/lift_report.json")), b = read_json_file(p("g1/lift_report.json"));
  EXPECT_LT(b["parameters"].get<int>(), a["parameters"].get<int>());
  EXPECT_EQ(b["super_variables"], 4);
}

TEST_F(Cli, C2FTraceHasSplits) {
  ASSERT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "10", "--nBanks", "2", "--evidence-fraction", "0.3", "--seed", "1",
                 "--out", p("g")})
                .code,
            0);
  auto r = run({"fit", "--model", p("g/model.json"), "--evidence", p("g/evidence.json"), "--mode", "c2f", "--epsilon", "2",
                "--stage-iters", "10", "--max-iters", "200", "--out", p("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto trace = slurp(p("c/trace.csv"));
  EXPECT_NE(trace.find(",split"), std::string::npos);
  EXPECT_NE(trace.find(",absorb"), std::string::npos);
  EXPECT_GE(read_json_file(p("c/lift_report.json"))["splits"].get<int>(), 1);
}

TEST_F(Cli, QueryMarginalMapAndCurve) {
  ASSERT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "3", "--nBanks", "1", "--out", p("g")}).code, 0);
  ASSERT_EQ(run({"fit", "--model", p("g/model.json"), "--K", "2", "--max-iters", "100", "--out", p("f")}).code, 0);
  auto m = run({"query", "--fitted", p("f/fitted.json"), "--marginal", "Market(s0)"});
  ASSERT_EQ(m.code, 0) << m.err;
  auto j = json::parse(m.out);
  EXPECT_EQ(j["marginal"]["weights"].size(), 2u);
  auto fitted = read_json_file(p("f/fitted.json"));
  for (const auto& v : fitted["variables"])
    if (v["id"] == "Market(s0)") EXPECT_EQ(j["marginal"]["components"][1]["Market(s0)"]["mean"], v["params"][1][0]);

  auto a = run({"query", "--fitted", p("f/fitted.json"), "--map-all"});
  ASSERT_EQ(a.code, 0);
  auto ja = json::parse(a.out);
  EXPECT_TRUE(ja["map"].contains("energy"));
  EXPECT_TRUE(std::isfinite(ja["map"]["energy"].get<double>()));

  auto c = run({"query", "--fitted", p("f/fitted.json"), "--curve", "Recession", "--curve-out", p("curve.csv")});
  ASSERT_EQ(c.code, 0);
  EXPECT_EQ(count_lines(slurp(p("curve.csv"))), 4097u);  // header + 4096 rows
}

TEST_F(Cli, QueryUnknownVariableExits4) {
  ASSERT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "2", "--nBanks", "1", "--evidence-fraction", "0.5", "--out", p("g")}).code, 0);
  ASSERT_EQ(run({"fit", "--model", p("g/model.json"), "--evidence", p("g/evidence.json"), "--max-iters", "10", "--out", p("f")}).code, 0);
  EXPECT_EQ(run({"query", "--fitted", p("f/fitted.json"), "--marginal", "nope"}).code, 4);
  const auto ev = read_json_file(p("g/evidence.json"));
  EXPECT_EQ(run({"query", "--fitted", p("f/fitted.json"), "--map", ev.begin().key()}).code, 4);
}

TEST_F(Cli, EvalOraclePreconditionExits5) {
  ASSERT_EQ(run({"gen", "--family", "toy-hmln", "--out", p("t")}).code, 0);
  ASSERT_EQ(run({"fit", "--model", p("t/model.json"), "--max-iters", "5", "--out", p("f")}).code, 0);
  EXPECT_EQ(run({"eval", "--fitted", p("f/fitted.json"), "--oracle", "gaussian"}).code, 5);
  auto r = run({"eval", "--fitted", p("f/fitted.json")});  // 16 discrete + 5 continuous dims: too large
  EXPECT_EQ(r.code, 5);
  EXPECT_EQ(json::parse(r.err)["error"], "TooLarge");
}

TEST_F(Cli, EvalBruteForceOnSmallToy) {
  ASSERT_EQ(run({"gen", "--family", "toy-hmln", "--nA", "1", "--nB", "1", "--nBox", "1", "--out", p("t")}).code, 0);
  ASSERT_EQ(run({"fit", "--model", p("t/model.json"), "--K", "2", "--max-iters", "200", "--out", p("f")}).code, 0);
  auto r = run({"eval", "--fitted", p("f/fitted.json"), "--grid-points", "201", "--out", p("f")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = json::parse(r.out);
  EXPECT_EQ(m["oracle"], "brute");
  EXPECT_GE(m["avg_kl"].get<double>(), 0.0);
  EXPECT_GE(m["avg_l1_map"].get<double>(), 0.0);
}

TEST_F(Cli, DivergenceExits3AndWritesTrace) {
  write_json_file(p("m.json"),
                  to_json(build_graph({{"d", Domain::discrete(2), {}}}, {{"f", {"d"}, TablePotential({2}, {0.0, -kInf})}})));
  auto r = run({"fit", "--model", p("m.json"), "--out", p("o")});
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(fs::exists(p("o/trace.csv")));
  EXPECT_EQ(json::parse(r.err)["error"], "DivergenceDetected");
}

TEST_F(Cli, ConfigFileFlagsWin) {
  ASSERT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "2", "--nBanks", "1", "--out", p("g")}).code, 0);
  std::ofstream(p("cfg.json")) << R"({"model": ")" << p("g/model.json") << R"(", "max-iters": 7, "obj-tol": 0, "grad-tol": 0, "K": 3})";
  auto r = run({"fit", "--config", p("cfg.json"), "--K", "1", "--out", p("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["iterations"], 7);
  EXPECT_EQ(read_json_file(p("o/fitted.json"))["K"], 1);
}

TEST_F(Cli, RefitIsReproducible) {
  ASSERT_EQ(run({"gen", "--family", "toy-hmln", "--nA", "1", "--nB", "2", "--nBox", "1", "--out", p("g")}).code, 0);
  for (const char* d : {"a", "b"})
    ASSERT_EQ(run({"fit", "--model", p("g/model.json"), "--K", "3", "--seed", "9", "--max-iters", "30", "--out", p(d)}).code, 0);
  EXPECT_EQ(slurp(p("a/fitted.json")), slurp(p("b/fitted.json")));
}

TEST_F(Cli, LiftReport) {
  ASSERT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "20", "--nBanks", "3", "--out", p("g")}).code, 0);
  auto r = run({"lift-report", "--model", p("g/model.json"), "--out", p("g")});
  ASSERT_EQ(r.code, 0);
  auto j = read_json_file(p("g/lift_report.json"));
  EXPECT_EQ(j["super_variables"], 4);
  EXPECT_EQ(j["ground_variables"], 84);
  EXPECT_GE(j["rounds"].size(), 1u);
}

// The installed binary: exit code and one-line JSON on stderr.
TEST_F(Cli, BinaryReportsErrorsAsJson) {
  const char* bin = std::getenv("LHVI_CLI");
  if (!bin) GTEST_SKIP() << "LHVI_CLI not set";
  const std::string cmd = std::string(bin) + " query --fitted " + p("missing.json") + " --marginal x 2> " + p("err.txt");
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
  const auto err = slurp(p("err.txt"));
  EXPECT_EQ(count_lines(err), 1u);
  EXPECT_EQ(json::parse(err)["error"], "ParseError");
}

TEST_F(Cli, ThreadsEnvOverride) {
  ASSERT_EQ(run({"gen", "--family", "rgm", "--nMarkets", "4", "--nBanks", "2", "--out", p("g")}).code, 0);
  setenv("LHVI_THREADS", "0", 1);
  EXPECT_EQ(run({"fit", "--model", p("g/model.json"), "--max-iters", "3", "--out", p("o")}).code, 2);
  setenv("LHVI_THREADS", "3", 1);
  EXPECT_EQ(run({"fit", "--model", p("g/model.json"), "--max-iters", "3", "--out", p("o")}).code, 0);
  unsetenv("LHVI_THREADS");
}
