#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "cohconf/data_io.hpp"
#include "cohconf/error.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cohconf;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "cohconf");
  std::ostringstream out, err;
  const int code = cohconf::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::path(COHCONF_BINARY_DIR) / "cli_scratch" /
          ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  // A small synthetic dataset written through the CLI itself.
  std::string synth(std::size_t n = 40, const std::string& seed = "3") {
    const auto cfg = path("synth_cfg.json");
    std::ofstream(cfg) << R"({"n_problems": )" << n << "}";
    const auto data = path("data.json");
    EXPECT_EQ(invoke({"--quiet", "--seed", seed, "--out", data, "synth", "--config", cfg}).code, cohconf::cli::kOk);
    return data;
  }
};

}  // namespace

class HelpGolden : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpGolden, MatchesFile) {
  const std::string sub = GetParam();
  const auto r = sub == "root" ? invoke({"--help"}) : invoke({sub, "--help"});
  EXPECT_EQ(r.code, cohconf::cli::kOk);
  const auto golden = fs::path(COHCONF_GOLDEN_DIR) / ("help_" + sub + ".txt");
  ASSERT_TRUE(fs::exists(golden)) << golden;
  EXPECT_EQ(r.out, slurp(golden));
}

INSTANTIATE_TEST_SUITE_P(Subcommands, HelpGolden,
                         ::testing::Values("root", "synth", "train", "calibrate", "predict", "eval",
                                           "validate-surrogate", "features"),
                         [](const auto& info) {
                           std::string s = info.param;
                           std::replace(s.begin(), s.end(), '-', '_');
                           return s;
                         });

TEST(CliUsage, ExitCodeOneOnUsageErrors) {
  EXPECT_EQ(invoke({}).code, cohconf::cli::kUsage);
  EXPECT_EQ(invoke({"synth", "--bogus"}).code, cohconf::cli::kUsage);
  EXPECT_EQ(invoke({"nope"}).code, cohconf::cli::kUsage);
  EXPECT_EQ(invoke({"train"}).code, cohconf::cli::kUsage);  // --data is required
  EXPECT_EQ(invoke({"calibrate", "--data", "d", "--model", "m", "--mode", "fuzzy"}).code, cohconf::cli::kUsage);
  EXPECT_EQ(invoke({"eval", "--data", "x", "--folds", "0"}).code, cohconf::cli::kUsage);
}

TEST(CliUsage, AlphaLists) {
  EXPECT_EQ(cohconf::cli::parse_alpha_list("0.05,0.1"), (std::vector<double>{0.05, 0.1}));
  const auto r = cohconf::cli::parse_alpha_list("0.01..0.10");
  ASSERT_EQ(r.size(), 10u);
  EXPECT_NEAR(r.back(), 0.10, 1e-12);
  EXPECT_EQ(cohconf::cli::parse_alpha_list("0.03..0.09:0.03").size(), 3u);
  EXPECT_THROW(cohconf::cli::parse_alpha_list("abc"), Error);
  EXPECT_THROW(cohconf::cli::parse_alpha_list("0.1,1.5"), Error);
}

TEST_F(CliTest, MissingOrBrokenDataIsExitTwo) {
  EXPECT_EQ(invoke({"features", "--data", path("absent.json")}).code, cohconf::cli::kData);
  std::ofstream(path("cyclic.json")) << R"({"schema": ["x"], "problems": [{"id": "c", "claims": [{"features": {}, "label": 1}, {"features": {}, "label": 1}], "edges": [[0,1],[1,0]]}]})";
  const auto r = invoke({"--out", path("o"), "features", "--data", path("cyclic.json")});
  EXPECT_EQ(r.code, cohconf::cli::kData);
  EXPECT_NE(r.err.find("'c'"), std::string::npos) << r.err;
  std::ofstream(path("bad.json")) << "{ nope";
  EXPECT_EQ(invoke({"features", "--data", path("bad.json")}).code, cohconf::cli::kData);
}

TEST_F(CliTest, NumericFailureIsExitThree) {
  std::ofstream(path("d.json")) << R"({"schema": ["x"], "problems": [{"id": "p", "claims": [{"features": {"x": 1e200}, "label": 1}, {"features": {"x": -1e200}, "label": 0}], "edges": []}]})";
  Checkpoint ck;
  ck.schema = FeatureSchema({"x"});
  ck.scorer = {{1e200}, 0.0, 0.0};
  write_text_file(path("m.json"), checkpoint_to_json(ck));
  const auto r = invoke({"--out", path("p.json"), "predict", "--data", path("d.json"), "--model", path("m.json"), "--tau-hat",
                      "0.5", "--mode", "soft"});
  EXPECT_EQ(r.code, cohconf::cli::kNumeric) << r.err;
}

TEST_F(CliTest, SynthIsDeterministicAndHonoursEnvSeed) {
  const auto cfg = path("cfg.json");
  std::ofstream(cfg) << R"({"n_problems": 15})";
  ASSERT_EQ(invoke({"--quiet", "--seed", "9", "--out", path("a.json"), "synth", "--config", cfg}).code, 0);
  ASSERT_EQ(invoke({"--quiet", "--seed", "9", "--out", path("b.json"), "synth", "--config", cfg}).code, 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  ::setenv("COHCONF_SEED", "9", 1);
  ASSERT_EQ(invoke({"--quiet", "--out", path("c.json"), "synth", "--config", cfg}).code, 0);
  ::unsetenv("COHCONF_SEED");
  EXPECT_EQ(slurp(path("a.json")), slurp(path("c.json")));
  ASSERT_EQ(invoke({"--quiet", "--seed", "10", "--out", path("d.json"), "synth", "--config", cfg}).code, 0);
  EXPECT_NE(slurp(path("a.json")), slurp(path("d.json")));
  ASSERT_EQ(invoke({"--quiet", "--out", path("dir"), "synth", "--n-problems", "3"}).code, 0);
  EXPECT_EQ(load_dataset(dir / "dir" / "dataset.json").problems.size(), 3u);
}

TEST_F(CliTest, HardPredictOnThreeClaimExample) {
  // Feature equal to the risk: weights -1, C 0 gives r = x.
  std::ofstream(path("d.json")) << R"({"schema": ["x"], "problems": [{"id": "capital", "claims": [
      {"features": {"x": 0.2}, "label": 1}, {"features": {"x": 0.9}, "label": 0}, {"features": {"x": 0.1}, "label": 1}],
      "edges": []}]})";
  Checkpoint ck;
  ck.schema = FeatureSchema({"x"});
  ck.scorer = {{-1.0}, 0.0, 0.0};
  write_text_file(path("m.json"), checkpoint_to_json(ck));
  const auto r = invoke({"--out", path("pred.json"), "predict", "--data", path("d.json"), "--model", path("m.json"),
                      "--tau-hat", "0.5", "--mode", "hard"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(slurp(path("pred.json")));
  EXPECT_EQ(doc["problems"][0]["retained"], nlohmann::json::array({0, 2}));
  EXPECT_DOUBLE_EQ(doc["problems"][0]["tau_star"].get<double>(), 0.2);

  const auto soft = invoke({"--quiet", "--out", path("soft.json"), "predict", "--data", path("d.json"), "--model",
                         path("m.json"), "--tau-hat", "-inf", "--mode", "soft"});
  ASSERT_EQ(soft.code, 0) << soft.err;
  EXPECT_TRUE(nlohmann::json::parse(slurp(path("soft.json")))["problems"][0]["retained"].empty());
}

TEST_F(CliTest, TrainCalibratePredictPipeline) {
  const auto data = synth(40);
  const auto hp = path("hp.json");
  std::ofstream(hp) << R"({"preset": "train-default", "epochs": 3, "patience": 2})";
  auto r = invoke({"--quiet", "--seed", "1", "--out", path("m1.json"), "train", "--data", data, "--hp", hp, "--alpha", "0.2"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"--quiet", "--seed", "1", "--out", path("m2.json"), "train", "--data", data, "--hp", hp, "--alpha", "0.2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("m1.json")), slurp(path("m2.json")));
  const auto model = load_checkpoint(path("m1.json"));
  EXPECT_EQ(model.config.alpha, 0.2);
  EXPECT_EQ(model.config.epochs, 3u);

  r = invoke({"--quiet", "--out", path("cal.json"), "calibrate", "--data", data, "--model", path("m1.json"), "--alpha", "0.2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cal = nlohmann::json::parse(slurp(path("cal.json")));
  ASSERT_TRUE(cal.contains("tau_hat"));
  const std::string tau = cal["tau_hat"].is_string() ? cal["tau_hat"].get<std::string>()
                                                      : nlohmann::json(cal["tau_hat"].get<double>()).dump();
  r = invoke({"--quiet", "--out", path("pred.json"), "predict", "--data", data, "--model", path("m1.json"), "--tau-hat", tau});
  EXPECT_EQ(r.code, 0) << r.err;
  r = invoke({"--quiet", "--out", path("cal_soft.json"), "calibrate", "--data", data, "--model", path("m1.json"), "--mode", "soft"});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(CliTest, EvalWritesAggregatesAndIsByteStable) {
  const auto data = synth(60);
  const std::vector<std::string> args{"--quiet", "--seed", "4", "eval", "--data", data, "--alphas", "0.1,0.2",
                                      "--methods", "cf,independent", "--folds", "3"};
  auto a = args;
  a.insert(a.begin(), {"--out", path("e1")});
  auto b = args;
  b.insert(b.begin(), {"--out", path("e2"), "--jobs", "2"});
  ASSERT_EQ(invoke(a).code, 0);
  ASSERT_EQ(invoke(b).code, 0);
  const auto csv = slurp(dir / "e1" / "eval.csv");
  EXPECT_EQ(csv, slurp(dir / "e2" / "eval.csv"));
  std::size_t aggregates = 0;
  std::istringstream lines(csv);
  for (std::string line; std::getline(lines, line);)
    if (line.find(",all,") != std::string::npos) ++aggregates;
  EXPECT_EQ(aggregates, 4u);
  EXPECT_TRUE(fs::exists(dir / "e1" / "eval_summary.txt"));
}

TEST_F(CliTest, ValidateSurrogateWritesTables) {
  const auto cfg = path("cfg.json");
  std::ofstream(cfg) << R"({"n_problems": 60, "require_false": true})";
  ASSERT_EQ(invoke({"--quiet", "--seed", "2", "--out", path("d.json"), "synth", "--config", cfg}).code, 0);
  const auto r = invoke({"--quiet", "--out", path("sur"), "validate-surrogate", "--data", path("d.json"), "--temps", "sharp",
                      "--alphas", "0.05,0.1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto agreement = slurp(dir / "sur" / "agreement.csv");
  EXPECT_TRUE(fs::exists(dir / "sur" / "correlation.csv"));
  std::istringstream lines(agreement);
  std::string line;
  std::getline(lines, line);
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    const double pct = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_GE(pct, 0.0) << line;
    EXPECT_LE(pct, 100.0) << line;
  }
  EXPECT_EQ(rows, 2);
}

TEST_F(CliTest, FeaturesCsv) {
  const auto data = synth(5);
  ASSERT_EQ(invoke({"--quiet", "--out", path("f"), "features", "--data", data, "--write-dataset", path("f/d.json")}).code, 0);
  const auto csv = slurp(dir / "f" / "features.csv");
  EXPECT_EQ(csv.rfind("problem,claim,nx_in_degree", 0), 0u);
  EXPECT_EQ(load_dataset(path("f/d.json")), load_dataset(data));
}
