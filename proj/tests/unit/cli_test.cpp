#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "npmean_cli/commands.hpp"
#include "synthetic.hpp"

namespace npmean {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "npmean");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("npmean_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    CsvSchema schema;
    schema.covariates = {"x1", "x2", "x3"};
    schema.pi = "pi";
    write_csv(testing::toy_sample({}, 5), (dir_ / "data.csv").string(), schema);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string data() const { return (dir_ / "data.csv").string(); }
  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(Cli, EstimateWritesReports) {
  const auto r = run({"estimate", "--input", data(), "--covariates", "x1,x2,x3", "--methods",
                      "ipw-logistic,aipw-oalasso", "--out", out("est")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "est" / "ipw-logistic.json"));
  EXPECT_TRUE(std::isfinite(j["mu_hat"].get<double>()));
  EXPECT_GT(j["se"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir_ / "est" / "aipw-oalasso.json"));
  const auto summary = slurp(dir_ / "est" / "summary.csv");
  EXPECT_EQ(summary.rfind("estimator,mu_hat,se,ci_lo,ci_hi\n", 0), 0u);
  EXPECT_EQ(r.out, summary);
}

TEST_F(Cli, ZeroOutcomeMatchesIpw) {
  ASSERT_EQ(run({"estimate", "--input", data(), "--covariates", "x1,x2,x3", "--methods", "ipw-logistic",
                 "--out", out("a")})
                .code,
            0);
  ASSERT_EQ(run({"estimate", "--input", data(), "--covariates", "x1,x2,x3", "--methods", "aipw-logistic",
                 "--zero-outcome", "--out", out("b")})
                .code,
            0);
  const auto ipw = nlohmann::json::parse(slurp(dir_ / "a" / "ipw-logistic.json"));
  const auto aipw = nlohmann::json::parse(slurp(dir_ / "b" / "aipw-logistic.json"));
  EXPECT_NEAR(ipw["mu_hat"].get<double>(), aipw["mu_hat"].get<double>(), 1e-12);
  EXPECT_EQ(aipw["method"]["outcome_model"], "zero");
}

TEST_F(Cli, MissingColumnExitsOne) {
  const auto r = run({"estimate", "--input", data(), "--covariates", "x1,income", "--out", out("e")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("income"), std::string::npos);
}

TEST_F(Cli, UnknownDesignAndMethodExitOne) {
  EXPECT_EQ(run({"estimate", "--input", data(), "--covariates", "x1", "--design", "stratified"}).code, 1);
  EXPECT_EQ(run({"estimate", "--input", data(), "--covariates", "x1", "--methods", "bart"}).code, 1);
  EXPECT_EQ(run({"estimate", "--covariates", "x1"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
}

TEST_F(Cli, CvLambdaSingleGridValue) {
  const auto r = run({"cv-lambda", "--input", data(), "--covariates", "x1,x2,x3", "--grid", "12.5", "--out",
                      out("cv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("selected lambda: 12.5"), std::string::npos);
  const auto curve = slurp(dir_ / "cv" / "cv_curve.csv");
  EXPECT_EQ(curve.rfind("lambda,mean_loss,fold_1,fold_2,fold_3,fold_4,fold_5,selected\n", 0), 0u);
}

TEST_F(Cli, CvLambdaDeterministic) {
  for (const char* sub : {"r1", "r2"}) {
    ASSERT_EQ(run({"cv-lambda", "--input", data(), "--covariates", "x1,x2,x3", "--method", "oalasso", "--seed",
                   "9", "--out", out(sub)})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(dir_ / "r1" / "cv_curve.csv"), slurp(dir_ / "r2" / "cv_curve.csv"));
}

TEST_F(Cli, TooManyFoldsExitsOne) {
  std::ifstream in(data());
  std::ofstream outf(out("grouped.csv"));
  std::string line;
  std::getline(in, line);
  outf << line << ",g\n";
  int k = 0;
  while (std::getline(in, line)) outf << line << ',' << (k++ % 3) << '\n';
  outf.close();
  const auto r = run({"cv-lambda", "--input", out("grouped.csv"), "--covariates", "x1,x2,x3", "--group-col", "g",
                      "--folds", "5", "--out", out("cvg")});
  EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, SimulateDeterministic) {
  for (const char* sub : {"s1", "s2"}) {
    const auto r = run({"simulate", "--scenario", "1", "--reps", "2", "--seed", "5", "--methods",
                        "ipw-logistic,aipw-lasso", "--out", out(sub)});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("%COV"), std::string::npos);
  }
  EXPECT_EQ(slurp(dir_ / "s1" / "metrics.csv"), slurp(dir_ / "s2" / "metrics.csv"));
  EXPECT_EQ(slurp(dir_ / "s1" / "selection.csv"), slurp(dir_ / "s2" / "selection.csv"));
  EXPECT_EQ(slurp(dir_ / "s1" / "metrics.csv").rfind("estimator,pct_bias,mse,mc_se,mean_se,coverage\n", 0), 0u);
}

TEST_F(Cli, SimulateRequiresSeed) {
  EXPECT_EQ(run({"simulate", "--scenario", "1", "--reps", "2"}).code, 1);
  EXPECT_EQ(run({"simulate", "--scenario", "7", "--seed", "1"}).code, 1);
}

TEST_F(Cli, PairInputs) {
  {
    std::ofstream a(out("a.csv"));
    a << "x1,y\n";
    Rng rng(1);
    for (int i = 0; i < 60; ++i) {
      const double x = rng.normal();
      a << x << ',' << 1 + x + rng.normal() << '\n';
    }
    std::ofstream b(out("b.csv"));
    b << "x1,d\n";
    for (int i = 0; i < 80; ++i) b << rng.normal() - 0.5 << ",12\n";
  }
  const auto r = run({"estimate", "--input-a", out("a.csv"), "--input-b", out("b.csv"), "--covariates", "x1",
                      "--methods", "ipw-logistic,aipw-logistic", "--out", out("pair")});
  EXPECT_EQ(r.code, 0) << r.err;
}

}  // namespace
}  // namespace npmean
