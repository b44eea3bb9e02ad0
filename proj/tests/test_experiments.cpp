#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bohm/experiments.hpp"
#include "support.hpp"

using namespace bohm;
using bohm::testing::code_of;
using lab::ExperimentConfig;
namespace fs = std::filesystem;

namespace {

nlohmann::json parse(const char* text) { return nlohmann::json::parse(text); }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bohmlab_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = ExperimentConfig::parse(nlohmann::json::object(), "double-slit");
  EXPECT_EQ(c.experiment, "double-slit");
  EXPECT_EQ(c.run.n, 10000u);
  EXPECT_DOUBLE_EQ(c.laws.swirl_strength, 0.02);
  EXPECT_DOUBLE_EQ(c.protocol.sigma, 8.0);
  EXPECT_DOUBLE_EQ(c.protocol.tau, 0.02);
}

TEST(Config, ReadsNestedValues) {
  const auto c = ExperimentConfig::parse(
      parse(R"({"seed": 9, "run": {"n": 123, "dt": 0.003}, "grid": {"line": {"points": 256}},
                "cor": {"calibration_taus": [0.01, 0.02]}})"),
      "equivariance");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.run.n, 123u);
  EXPECT_DOUBLE_EQ(c.run.dt, 0.003);
  EXPECT_EQ(c.line.points, 256);
  EXPECT_EQ(c.cor.calibration_taus, (std::vector<double>{0.01, 0.02}));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"sead": 1})"), "three-box"); }), Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"run": {"steps": 1}})"), "three-box"); }), Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"grid": {"line": {"n": 1}}})"), "three-box"); }),
            Errc::config);
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"run": {"n": 0}})"), "double-slit"); }), Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"run": {"n": -5}})"), "double-slit"); }), Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"run": {"n": 1.5}})"), "double-slit"); }), Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"seed": "one"})"), "double-slit"); }), Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"run": "fast"})"), "double-slit"); }), Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"protocol": {"tau": -0.1}})"), "weak-protocol"); }),
            Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"protocol": {"n": 10}})"), "weak-protocol"); }),
            Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"constants": {"mass": 0}})"), "three-box"); }),
            Errc::config);
  EXPECT_EQ(code_of([] {
              ExperimentConfig::parse(parse(R"({"run": {"dt": 0.001, "snapshot_interval": 0.05}})"), "equivariance");
            }),
            Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse("[1, 2]"), "three-box"); }), Errc::config);
}

TEST(Config, ExperimentNameMustMatch) {
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(parse(R"({"experiment": "cor-test"})"), "three-box"); }),
            Errc::config);
  EXPECT_EQ(code_of([] { ExperimentConfig::parse(nlohmann::json::object(), "four-box"); }), Errc::config);
}

TEST(Config, CanonicalJsonRoundTripsAndHashes) {
  const auto a = ExperimentConfig::parse(parse(R"({"seed": 5, "laws": {"offset": 0.25}})"), "cor-test");
  const auto b = ExperimentConfig::parse(a.to_json(), "cor-test");
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.hash(), b.hash());
  auto c = a;
  c.seed = 6;
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Config, ShippedConfigsParse) {
  const fs::path dir = fs::path(BOHM_SOURCE_DIR) / "configs";
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream f(entry.path());
    const auto j = nlohmann::json::parse(f);
    EXPECT_NO_THROW(ExperimentConfig::parse(j, j.at("experiment").get<std::string>())) << entry.path();
    ++seen;
  }
  EXPECT_GE(seen, 5);
}

TEST(Manifest, WrittenWithAssertionsAndNoTemporary) {
  const auto dir = scratch("manifest");
  const lab::OutputDir out(dir);
  auto cfg = ExperimentConfig::parse(nlohmann::json::object(), "three-box");
  lab::RunResult r;
  out.write("a.txt", "x\n", r);
  r.assertions.push_back(lab::at_most("small", 0.5, 1.0));
  r.assertions.push_back(lab::at_least("big", 0.5, 1.0));
  lab::write_manifest(out, cfg, r, 0.25);
  EXPECT_FALSE(fs::exists(dir / "manifest.json.tmp"));
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["config_hash"], cfg.hash());
  EXPECT_EQ(m["tool_version"], lab::tool_version);
  EXPECT_EQ(m["outputs"], nlohmann::json::array({"a.txt"}));
  EXPECT_DOUBLE_EQ(m["wall_time_s"].get<double>(), 0.25);
  ASSERT_EQ(m["assertions"].size(), 2u);
  EXPECT_TRUE(m["assertions"][0]["passed"].get<bool>());
  EXPECT_FALSE(m["assertions"][1]["passed"].get<bool>());
  EXPECT_FALSE(m["passed"].get<bool>());
}

TEST(Runners, ThreeBoxReport) {
  const auto dir = scratch("three_box");
  const auto cfg = ExperimentConfig::parse(nlohmann::json::object(), "three-box");
  const auto r = lab::run_experiment(cfg, lab::OutputDir(dir));
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.assertions.size(), 5u);
  const auto rep = nlohmann::json::parse(slurp(dir / "three_box.json"));
  EXPECT_NEAR(rep["P_A"]["a_w_re"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(rep["P_C"]["a_w_re"].get<double>(), -1.0, 1e-12);
  EXPECT_NE(rep["orthogonal_postselection_demo"].get<std::string>().find("orthogonal-postselection"),
            std::string::npos);
  for (const char* f : {"pointer_P_A.csv", "pointer_P_B.csv", "pointer_P_C.csv"}) EXPECT_TRUE(fs::exists(dir / f));
}

TEST(Runners, CorTestOutputsAreByteIdentical) {
  const auto cfg = ExperimentConfig::parse(nlohmann::json::object(), "cor-test");
  const auto d1 = scratch("cor1"), d2 = scratch("cor2");
  const auto r1 = lab::run_experiment(cfg, lab::OutputDir(d1));
  const auto r2 = lab::run_experiment(cfg, lab::OutputDir(d2));
  EXPECT_TRUE(r1.passed());
  ASSERT_EQ(r1.outputs, r2.outputs);
  for (const auto& f : r1.outputs) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
}

TEST(Runners, DoubleSlitSmallRunIsReproducible) {
  const auto cfg = ExperimentConfig::parse(
      parse(R"({"grid": {"plane": {"min": -8, "max": 8, "points": 64}},
                "state": {"width": 0.8},
                "run": {"t_end": 0.2, "dt": 0.004, "snapshot_interval": 0.02, "n": 300, "paths": 6}})"),
      "double-slit");
  const auto d1 = scratch("ds1"), d2 = scratch("ds2");
  const auto r1 = lab::run_experiment(cfg, lab::OutputDir(d1));
  const auto r2 = lab::run_experiment(cfg, lab::OutputDir(d2));
  ASSERT_EQ(r1.outputs, r2.outputs);
  for (const auto& f : r1.outputs) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  for (const char* f : {"trajectories_standard.csv", "trajectories_modified.csv", "trajectories_stochastic.csv",
                        "trajectories.json", "screen_histogram.csv", "screen_ks.json", "double_slit.svg"})
    EXPECT_TRUE(fs::exists(d1 / f)) << f;
  EXPECT_EQ(slurp(d1 / "trajectories_standard.csv").substr(0, 11), "path,t,x,y\n");
  const auto order = std::find_if(r1.assertions.begin(), r1.assertions.end(),
                                  [](const lab::Assertion& a) { return a.name == "standard_paths_keep_order"; });
  ASSERT_NE(order, r1.assertions.end());
  EXPECT_TRUE(order->passed);
}

TEST(Runners, SeedChangesStochasticOutputs) {
  auto cfg = ExperimentConfig::parse(
      parse(R"({"grid": {"plane": {"min": -8, "max": 8, "points": 64}},
                "state": {"width": 0.8},
                "run": {"t_end": 0.1, "dt": 0.004, "snapshot_interval": 0.02, "n": 200, "paths": 4}})"),
      "double-slit");
  const auto d1 = scratch("seed1"), d2 = scratch("seed2");
  lab::run_experiment(cfg, lab::OutputDir(d1));
  cfg.seed += 1;
  lab::run_experiment(cfg, lab::OutputDir(d2));
  EXPECT_NE(slurp(d1 / "trajectories_stochastic.csv"), slurp(d2 / "trajectories_stochastic.csv"));
}

TEST(Streamlines, UniformFieldGivesStraightLines) {
  lab::VelocityTable v(Axis{-5.0, 5.0, 100}, 0.0, 0.1);
  for (int k = 0; k < 5; ++k) v.add_frame(std::vector<double>(100, 0.5));
  const auto s = lab::integrate_streamline(v, -1.0, 0.0, 0.4, 40);
  ASSERT_TRUE(s.complete);
  EXPECT_NEAR(s.xs.back(), -1.0 + 0.5 * 0.4, 1e-12);
  EXPECT_EQ(s.xs.size(), 41u);
}

TEST(Streamlines, StopsWhereFieldIsUndefined) {
  lab::VelocityTable v(Axis{-5.0, 5.0, 100}, 0.0, 0.1);
  std::vector<double> row(100, 1.0);
  for (int i = 60; i < 100; ++i) row[static_cast<size_t>(i)] = std::numeric_limits<double>::quiet_NaN();
  for (int k = 0; k < 3; ++k) v.add_frame(row);
  const auto s = lab::integrate_streamline(v, 0.0, 0.0, 2.0, 200);
  EXPECT_FALSE(s.complete);
  EXPECT_LT(s.xs.back(), 1.0);
}

namespace {

void expect_schema_covers(const nlohmann::json& value, const nlohmann::json& schema, const std::string& path) {
  if (!value.is_object()) return;
  ASSERT_TRUE(schema.contains("properties")) << path;
  EXPECT_EQ(schema.value("additionalProperties", true), false) << path;
  for (auto it = value.begin(); it != value.end(); ++it) {
    ASSERT_TRUE(schema["properties"].contains(it.key())) << path << "." << it.key();
    expect_schema_covers(it.value(), schema["properties"][it.key()], path + "." + it.key());
  }
  EXPECT_EQ(schema["properties"].size(), value.size()) << path;
}

}  // namespace

TEST(Config, PublishedSchemaMatchesParser) {
  std::ifstream f(fs::path(BOHM_SOURCE_DIR) / "docs" / "config.schema.json");
  const auto schema = nlohmann::json::parse(f);
  const auto cfg = ExperimentConfig::parse(nlohmann::json::object(), "cor-test");
  expect_schema_covers(cfg.to_json(), schema, "config");
  const auto& props = schema["properties"];
  EXPECT_EQ(props["run"]["properties"]["n"]["default"], cfg.run.n);
  EXPECT_EQ(props["protocol"]["properties"]["tau"]["default"], cfg.protocol.tau);
  EXPECT_EQ(props["laws"]["properties"]["swirl_strength"]["default"], cfg.laws.swirl_strength);
}
