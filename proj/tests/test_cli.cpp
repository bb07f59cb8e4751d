#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "causal_sde/cli.hpp"
#include "causal_sde/config.hpp"
#include "causal_sde/io.hpp"
#include "support.hpp"

using namespace causal_sde;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "causal_sde");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("causal_sde_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name, const std::string& content) const {
    const auto p = path_ / name;
    std::ofstream(p) << content;
    return p.string();
  }
  std::string str() const { return path_.string(); }
  std::string read(const std::string& name) const {
    std::ifstream in(path_ / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

 private:
  fs::path path_;
};

std::string config_path(const std::string& name) { return std::string(CAUSAL_SDE_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST(Config, SampleConfigsLoad) {
  for (const auto& entry : fs::directory_iterator(CAUSAL_SDE_CONFIG_DIR)) {
    const auto cfg = load_config(entry.path().string());
    EXPECT_GT(cfg.system.p(), 0u) << entry.path();
  }
}

TEST(Config, ParsesChemNetwork) {
  const auto cfg = load_config(config_path("chem.json"));
  EXPECT_EQ(cfg.system.labels(), (std::vector<std::string>{"X", "Y"}));
  EXPECT_EQ(cfg.system.d(), 5u);
  ASSERT_TRUE(cfg.intervention);
  EXPECT_EQ(cfg.intervention->target, 1u);
  EXPECT_EQ(cfg.n_paths, 100u);
  EXPECT_EQ(cfg.seed, 42u);
}

TEST(Config, ExpressionZetaAndJumps) {
  const auto cfg = load_config(config_path("jump-diffusion.json"));
  EXPECT_EQ(cfg.system.driver().jumps().size(), 1u);
  ASSERT_TRUE(cfg.intervention);
  EXPECT_FALSE(cfg.intervention->zeta.is_constant());
  EXPECT_EQ(cfg.points.size(), 2u);
}

TEST(Config, Errors) {
  using Json = nlohmann::ordered_json;
  auto parse = [](const char* text) { return parse_config(Json::parse(text)); };
  EXPECT_THROW(parse(R"({})"), ConfigError);
  EXPECT_THROW(parse(R"({"system": {"kind": "nope"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"system": {"kind": "builtin", "name": "nope"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"system": {"kind": "expression", "drift": ["x1 +"], "diffusion": [["1"]], "x0": [0]}})"),
               ConfigError);
  EXPECT_THROW(parse(R"({"system": {"kind": "expression", "drift": ["x2"], "diffusion": [["1"]], "x0": [0]}})"),
               ConfigError);
  EXPECT_THROW(parse(R"({"system": {"kind": "builtin", "name": "chem"}, "intervention": {"target": "Z1", "value": 1}})"),
               IntegratorInterventionError);
  EXPECT_THROW(parse(R"({"system": {"kind": "builtin", "name": "chem"}, "intervention": {"target": "W", "value": 1}})"),
               ConfigError);
  EXPECT_THROW(
      parse(R"({"system": {"kind": "builtin", "name": "chem"}, "intervention": {"target": "Y", "value": "x2 + 1"}})"),
      ConfigError);
}

TEST(Io, FormatDoubleRoundTrip) {
  testing_support::Gen g(77);
  for (int i = 0; i < 2000; ++i) {
    const double v = g.normal() * std::pow(10.0, g.uniform(-300, 300));
    ASSERT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_TRUE(std::isnan(parse_double(format_double(std::nan("")))));
  EXPECT_EQ(parse_double(format_double(-INFINITY)), -INFINITY);
}

TEST(Io, CsvRoundTripIsBitIdentical) {
  const auto e = simulate(load_builtin("levy-2d").system, Grid(1.0, 1.0 / 32), 25, 3);
  std::stringstream ss;
  write_csv(ss, e);
  const auto table = read_csv(ss);
  EXPECT_EQ(table.labels, e.labels);
  ASSERT_EQ(table.values.size(), e.values.size());
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    if (std::isnan(e.values[i])) {
      ASSERT_TRUE(std::isnan(table.values[i]));
    } else {
      ASSERT_EQ(table.values[i], e.values[i]);
    }
  }
}

TEST(Cli, SimulateZeroFieldGivesConstantRows) {
  TempDir dir;
  const auto r = run_cli({"simulate", "--config", config_path("zero-field.json"), "--out", dir.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(dir.read("paths.csv"));
  const auto t = read_csv(in);
  ASSERT_EQ(t.path.size(), 3u * 5u);
  for (std::size_t row = 0; row < t.path.size(); ++row) {
    EXPECT_EQ(t.values[2 * row], 1.5);
    EXPECT_EQ(t.values[2 * row + 1], -2.0);
  }
}

TEST(Cli, SignatureOfChemBuiltinHasFourEdges) {
  TempDir dir;
  const auto cfg = dir.file("c.json", R"({"system": {"kind": "builtin", "name": "chem"}})");
  const auto r = run_cli({"signature", "--config", cfg, "--out", dir.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string dot = dir.read("signature.dot");
  std::size_t edges = 0;
  for (std::size_t pos = dot.find("->"); pos != std::string::npos; pos = dot.find("->", pos + 2)) ++edges;
  EXPECT_EQ(edges, 4u);
}

TEST(Cli, CheckCommuteIsDeterministic) {
  TempDir a, b;
  ASSERT_EQ(run_cli({"check-commute", "--config", config_path("ou.json"), "--out", a.str()}).code, 0);
  ASSERT_EQ(run_cli({"check-commute", "--config", config_path("ou.json"), "--out", b.str()}).code, 0);
  EXPECT_EQ(a.read("commutation.json"), b.read("commutation.json"));
  const auto j = nlohmann::ordered_json::parse(a.read("commutation.json"));
  EXPECT_EQ(j["verdict"], "pass");
}

TEST(Cli, IdentifyReportIsDeterministic) {
  TempDir a, b;
  const std::vector<std::string> args = {"check-identify", "--config", config_path("two-signatures.json"), "--paths",
                                         "1000", "--delta", "0.01"};
  auto with_out = [&](const TempDir& d) {
    auto v = args;
    v.push_back("--out");
    v.push_back(d.str());
    return run_cli(v);
  };
  const auto ra = with_out(a);
  ASSERT_TRUE(ra.code == 0 || ra.code == 3) << ra.err;
  with_out(b);
  EXPECT_EQ(a.read("identifiability.json"), b.read("identifiability.json"));
}

TEST(Cli, GeneratorWritesJson) {
  TempDir dir;
  ASSERT_EQ(run_cli({"generator", "--config", config_path("jump-diffusion.json"), "--out", dir.str()}).code, 0);
  const auto j = nlohmann::ordered_json::parse(dir.read("generator.json"));
  ASSERT_EQ(j["points"].size(), 2u);
  EXPECT_EQ(j["points"][0]["jump_atoms"].size(), 1u);
  for (const auto& v : j["points"][0]["values"])
    EXPECT_NEAR(v["d_based"].get<double>(), v["e_based"].get<double>(), 1e-9);
}

TEST(Cli, ConvergenceWritesTable) {
  TempDir dir;
  ASSERT_EQ(run_cli({"convergence", "--config", config_path("drift-diffusion.json"), "--out", dir.str()}).code, 0);
  const std::string csv = dir.read("convergence.csv");
  EXPECT_EQ(csv.rfind("delta,rms_sup_error\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Cli, InterveneSummary) {
  const auto r = run_cli({"intervene", "--config", config_path("chem.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Y := 1"), std::string::npos);
  EXPECT_NE(r.out.find("path,t,X"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli({"simulate"}).code, 1);
  EXPECT_EQ(run_cli({"simulate", "--config", dir.str() + "/missing.json"}).code, 1);
  EXPECT_EQ(run_cli({"simulate", "--config", dir.file("bad.json", "{not json")}).code, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({"demo", "unknown"}).code, 1);
  const auto integrator = dir.file(
      "z.json", R"({"system": {"kind": "builtin", "name": "chem"}, "intervention": {"target": "Z2", "value": 1}})");
  EXPECT_EQ(run_cli({"check-commute", "--config", integrator}).code, 1);
  const auto no_intervention = dir.file("n.json", R"({"system": {"kind": "builtin", "name": "gbm"}})");
  EXPECT_EQ(run_cli({"check-commute", "--config", no_intervention}).code, 1);
  // Too few paths for the identifiability test: a runtime error.
  EXPECT_EQ(run_cli({"check-identify", "--config", config_path("two-signatures.json"), "--paths", "10"}).code, 2);
  // Bad grid from the command line.
  EXPECT_EQ(run_cli({"simulate", "--config", config_path("zero-field.json"), "--delta", "0.3"}).code, 1);
}

TEST(Cli, VerdictFailureExitCode) {
  TempDir dir;
  const auto cfg = dir.file("ou2.json", R"({
    "system": {"kind": "ou", "B": [[-1, 0.5], [0.3, -2]], "sigma": [[0.6, 0], [0.3, 0.5]], "x0": [0.5, -0.5]},
    "compare_system": {"kind": "ou", "B": [[-1, 0.5], [0.3, -2]], "sigma": [[0.6, 0], [0.9, 0.5]], "x0": [0.5, -0.5]},
    "grid": {"horizon": 1.0, "delta": 0.01},
    "n_paths": 2000,
    "intervention": {"target": "x1", "value": 2},
    "test": {"times": [1.0]}
  })");
  const auto r = run_cli({"check-identify", "--config", cfg, "--out", dir.str()});
  EXPECT_EQ(r.code, 3) << r.err;
  const auto j = nlohmann::ordered_json::parse(dir.read("identifiability.json"));
  EXPECT_EQ(j["verdict"], "inconsistent");
  EXPECT_EQ(j["hypothesis"], "violated");
}

TEST(Cli, DemoIto) {
  TempDir dir;
  const auto r = run_cli({"demo", "ito-counterexample", "--out", dir.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::ordered_json::parse(dir.read("ito.json"));
  EXPECT_EQ(j["dist_constant_at_t0"], 1.0);
  EXPECT_TRUE(j["contradiction"].get<bool>());
}

TEST(Cli, DemoChem) {
  const auto r = run_cli({"demo", "chem"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("signature (4 edges)"), std::string::npos);
}
