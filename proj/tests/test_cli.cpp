#include "rahmc/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace rahmc;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rahmc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const json& j, const std::string& name = "config.json") {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p.string();
  }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "rahmc");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static json minimal() {
    return {{"target", {{"name", "bimodal"}, {"params", {{"d", 3}}}}},
            {"sampler", {{"kind", "RAHMC"}, {"epsilon", 0.1}, {"gamma", 0.5}, {"L", 20}}},
            {"run", {{"n", 10}, {"warmup", 5}, {"chains", 2}, {"seed", 4}}}};
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, SampleWritesCsvAndMetadata) {
  const auto cfg = write_config(minimal());
  const auto out = (dir_ / "run").string();
  ASSERT_EQ(run({"sample", "--config", cfg, "--out", out}), 0) << err_.str();
  std::ifstream csv(fs::path(out) / "chain_0.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, "iter,q1,q2,q3,accepted,H_current,H_proposed");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 10);
  EXPECT_TRUE(fs::exists(fs::path(out) / "chain_1.csv"));

  const json meta = json::parse(slurp(fs::path(out) / "run.json"));
  for (const char* key : {"seed", "target", "sampler", "epsilon", "gamma", "L", "acceptance_rate", "n", "warmup",
                          "wall_seconds"})
    EXPECT_TRUE(meta.contains(key)) << key;
  EXPECT_GE(meta["acceptance_rate"].get<double>(), 0.0);
  EXPECT_LE(meta["acceptance_rate"].get<double>(), 1.0);
  EXPECT_EQ(meta["seed"].get<int>(), 4);
}

TEST_F(CliTest, SampleFloatsHaveSeventeenSignificantDigits) {
  const auto cfg = write_config(minimal());
  ASSERT_EQ(run({"sample", "--config", cfg, "--out", (dir_ / "r").string()}), 0);
  std::ifstream csv(dir_ / "r" / "chain_0.csv");
  std::string line;
  std::getline(csv, line);
  std::getline(csv, line);
  std::stringstream ss(line);
  std::string cell;
  std::getline(ss, cell, ',');
  std::getline(ss, cell, ',');
  EXPECT_EQ(std::strtod(cell.c_str(), nullptr), std::stod(fmt17(std::strtod(cell.c_str(), nullptr))));
  EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
}

TEST_F(CliTest, SampleIsByteIdenticalAcrossRunsAndThreads) {
  const auto cfg = write_config(minimal());
  ASSERT_EQ(run({"sample", "--config", cfg, "--out", (dir_ / "a").string(), "--threads", "1"}), 0);
  ASSERT_EQ(run({"sample", "--config", cfg, "--out", (dir_ / "b").string(), "--threads", "2"}), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "chain_0.csv"), slurp(dir_ / "b" / "chain_0.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "chain_1.csv"), slurp(dir_ / "b" / "chain_1.csv"));
}

TEST_F(CliTest, SeedFlagOverridesConfig) {
  const auto cfg = write_config(minimal());
  ASSERT_EQ(run({"sample", "--config", cfg, "--out", (dir_ / "a").string(), "--seed", "99"}), 0);
  const json meta = json::parse(slurp(dir_ / "a" / "run.json"));
  EXPECT_EQ(meta["seed"].get<int>(), 99);
}

TEST_F(CliTest, ThreadsFromEnvironment) {
  const auto cfg = write_config(minimal());
  ::setenv("RAHMC_THREADS", "2", 1);
  EXPECT_EQ(run({"sample", "--config", cfg, "--out", (dir_ / "a").string()}), 0);
  ::setenv("RAHMC_THREADS", "zero", 1);
  EXPECT_EQ(run({"sample", "--config", cfg, "--out", (dir_ / "b").string()}), 2);
  ::unsetenv("RAHMC_THREADS");
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"bogus"}), 2);
  EXPECT_EQ(run({"sample"}), 2);  // --config is required
  EXPECT_EQ(run({"sample", "--config", (dir_ / "missing.json").string()}), 2);
  EXPECT_EQ(run({"sample", "--config", write_config(json::parse("[1, 2]"), "arr.json")}), 2);
  std::ofstream(dir_ / "broken.json") << "{ not json";
  EXPECT_EQ(run({"sample", "--config", (dir_ / "broken.json").string()}), 2);
}

TEST_F(CliTest, InvalidFieldsNameTheField) {
  json j = minimal();
  j["run"]["n"] = 0;
  EXPECT_EQ(run({"sample", "--config", write_config(j)}), 2);
  EXPECT_NE(err_.str().find("run.n"), std::string::npos);

  j = minimal();
  j["target"]["name"] = "nope";
  EXPECT_EQ(run({"sample", "--config", write_config(j)}), 2);
  EXPECT_NE(err_.str().find("target.name"), std::string::npos);

  j = minimal();
  j["sampler"]["L"] = 7;
  EXPECT_EQ(run({"sample", "--config", write_config(j)}), 2);
  EXPECT_NE(err_.str().find("sampler.L"), std::string::npos);
}

TEST_F(CliTest, TuneEmitsParameters) {
  json j = minimal();
  j["sampler"] = {{"kind", "RAHMC"}, {"tune", true}, {"delta", 0.6}, {"T", 15.0}};
  j["run"]["warmup"] = 300;
  const auto cfg = write_config(j);
  ASSERT_EQ(run({"tune", "--config", cfg, "--out", (dir_ / "t").string()}), 0) << err_.str();
  const json t = json::parse(slurp(dir_ / "t" / "tune.json"));
  for (const char* key : {"epsilon", "gamma", "L", "delta", "T", "acceptance_during_warmup"})
    ASSERT_TRUE(t.contains(key)) << key;
  EXPECT_GT(t["epsilon"].get<double>(), 0.0);
  EXPECT_GT(t["gamma"].get<double>(), 0.0);
  EXPECT_EQ(t["L"].get<long>() % 2, 0);

  ASSERT_EQ(run({"tune", "--config", cfg, "--out", (dir_ / "t2").string()}), 0);
  EXPECT_EQ(slurp(dir_ / "t" / "tune.json"), slurp(dir_ / "t2" / "tune.json"));
}

TEST_F(CliTest, TuneRejectsBadDelta) {
  json j = minimal();
  j["sampler"] = {{"kind", "RAHMC"}, {"tune", true}, {"delta", 1.5}};
  EXPECT_EQ(run({"tune", "--config", write_config(j)}), 2);
}

TEST_F(CliTest, TunerFailureExitsThree) {
  // A huge gamma0 overflows the repelling stage on every warm-up trajectory.
  json j = minimal();
  j["target"] = {{"name", "std_gaussian"}, {"params", {{"d", 2}}}};
  j["sampler"] = {{"kind", "RAHMC"}, {"tune", true}, {"gamma0", 1e12}, {"max_L", 4}};
  j["run"]["warmup"] = 5;
  EXPECT_EQ(run({"tune", "--config", write_config(j), "--out", (dir_ / "t").string()}), 3) << err_.str();
  EXPECT_NE(err_.str().find("blew up"), std::string::npos);
}

TEST_F(CliTest, CompareReportsEachSampler) {
  json j = minimal();
  j.erase("sampler");
  j["samplers"] = {{{"kind", "HMC"}, {"epsilon", 0.1}, {"L", 20}},
                   {{"kind", "RAHMC"}, {"epsilon", 0.1}, {"gamma", 0.3}, {"L", 20}}};
  j["run"] = {{"n", 200}, {"warmup", 20}, {"chains", 1}, {"seed", 1}};
  j["metrics"] = {{"reference_n", 200}, {"max_lag", 10}};
  ASSERT_EQ(run({"compare", "--config", write_config(j), "--out", (dir_ / "c").string()}), 0) << err_.str();
  const json c = json::parse(slurp(dir_ / "c" / "compare.json"));
  ASSERT_EQ(c["samplers"].size(), 2u);
  for (const auto& row : c["samplers"]) {
    EXPECT_TRUE(row["sinkhorn"].contains("W2"));
    EXPECT_TRUE(row.contains("acceptance_rate"));
    EXPECT_TRUE(row.contains("wall_seconds"));
    EXPECT_EQ(row["acf"].size(), 11u);
    EXPECT_EQ(row["mode_occupancy"].size(), 2u);
  }
  EXPECT_TRUE(fs::exists(dir_ / "c" / "acf.csv"));
}

TEST_F(CliTest, CompareWithoutExactSamplerMarksMetricUnavailable) {
  json j = minimal();
  j["target"] = {{"name", "concentric_l1"}, {"params", {{"d", 2}}}};
  j.erase("sampler");
  j["samplers"] = {{{"kind", "RAHMC"}, {"epsilon", 0.05}, {"gamma", 0.1}, {"L", 20}}};
  j["run"] = {{"n", 100}, {"warmup", 10}, {"chains", 1}, {"seed", 1}};
  ASSERT_EQ(run({"compare", "--config", write_config(j), "--out", (dir_ / "c").string()}), 0) << err_.str();
  const json c = json::parse(slurp(dir_ / "c" / "compare.json"));
  EXPECT_EQ(c["samplers"][0]["sinkhorn"], "unavailable");
}

TEST_F(CliTest, CompareEmptySamplerListExitsTwo) {
  json j = minimal();
  j.erase("sampler");
  j["samplers"] = json::array();
  EXPECT_EQ(run({"compare", "--config", write_config(j)}), 2);
}

TEST_F(CliTest, VerifySelectedChecks) {
  const auto out = (dir_ / "v").string();
  ASSERT_EQ(run({"verify", "involution", "energy_rate", "--seed", "3", "--out", out}), 0) << out_.str();
  const json v = json::parse(slurp(fs::path(out) / "verify.json"));
  EXPECT_TRUE(v["pass"].get<bool>());
  EXPECT_EQ(v["reports"].size(), 2u);
  const auto first = slurp(fs::path(out) / "verify.json");
  ASSERT_EQ(run({"verify", "involution", "energy_rate", "--seed", "3", "--out", out}), 0);
  const json v2 = json::parse(slurp(fs::path(out) / "verify.json"));
  EXPECT_EQ(v["reports"][0]["measured"], v2["reports"][0]["measured"]);
}

TEST_F(CliTest, VerifyUnknownCheckListsValidNames) {
  EXPECT_EQ(run({"verify", "nonsense", "--out", (dir_ / "v").string()}), 2);
  EXPECT_NE(err_.str().find("involution"), std::string::npos);
}
