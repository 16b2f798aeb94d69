#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "srloc/experiment_io.hpp"

namespace srloc {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> storage{"srloc"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& s : storage) argv.push_back(s.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("srloc_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  static std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  /// Exact ranges from four corners of a square to (1234.5, 2345.25).
  std::string noiseless_csv() const {
    const double x = 1234.5, y = 2345.25;
    std::ostringstream s;
    s.precision(17);
    s << "ax,ay,range\n";
    for (auto [ax, ay] : {std::pair{0.0, 0.0}, {4000.0, 0.0}, {0.0, 4000.0}, {4000.0, 4000.0}, {2000.0, 100.0}}) {
      s << ax << "," << ay << "," << std::hypot(x - ax, y - ay) << "\n";
    }
    return write("ranges.csv", s.str());
  }

  fs::path dir_;
};

TEST_F(CliTest, LocalizeNoiselessData) {
  const Outcome o = run_cli({"localize", noiseless_csv(), "--sigma", "1", "--json"});
  ASSERT_EQ(o.code, cli::kOk) << o.err;
  const nlohmann::json j = nlohmann::json::parse(o.out);
  EXPECT_NEAR(j["x_hat"][0].get<double>(), 1234.5, 1e-6 * 1234.5);
  EXPECT_NEAR(j["x_hat"][1].get<double>(), 2345.25, 1e-6 * 2345.25);
  EXPECT_EQ(j["method"], "sr_hybrid");
  EXPECT_EQ(j["weights"].size(), 5u);
  EXPECT_TRUE(j["converged"].get<bool>());
}

TEST_F(CliTest, LocalizeEveryMethod) {
  const std::string csv = noiseless_csv();
  for (const std::string m : {"sr-ls", "sr-irls", "sr-gd", "sr-hybrid"}) {
    const Outcome o = run_cli({"localize", csv, "--method", m, "--epsilon", "100", "--json"});
    ASSERT_EQ(o.code, cli::kOk) << m << ": " << o.err;
    EXPECT_NEAR(nlohmann::json::parse(o.out)["x_hat"][0].get<double>(), 1234.5, 1e-3) << m;
  }
}

TEST_F(CliTest, LocalizeAutoSigmaFlagsTheOutlier) {
  const double x = 1500.0, y = 2500.0;
  std::ostringstream s;
  s.precision(17);
  s << "range,ax,ay\n";
  const double noise[] = {12.0, -30.0, 25.0, -8.0, 40.0, -22.0, 5.0, 17.0};
  for (int i = 0; i < 8; ++i) {
    const double ax = 4000.0 * std::cos(0.8 * i) + 2000.0;
    const double ay = 4000.0 * std::sin(0.8 * i) + 2000.0;
    const double r = std::hypot(x - ax, y - ay) + noise[i] + (i == 3 ? 2500.0 : 0.0);
    s << r << "," << ax << "," << ay << "\n";
  }
  const Outcome o = run_cli({"localize", write("outlier.csv", s.str())});
  ASSERT_EQ(o.code, cli::kOk) << o.err;
  EXPECT_NE(o.out.find("sigma_hat"), std::string::npos);
  EXPECT_NE(o.out.find("(1.34 sqrt(3) sigma_hat)"), std::string::npos);
  // The contaminated sensor (fourth row of the file) has the smallest weight: first row, marked.
  const auto rows = o.out.find("sensor  sample  weight\n");
  ASSERT_NE(rows, std::string::npos);
  const std::string first = o.out.substr(rows + 24, o.out.find('\n', rows + 24) - rows - 24);
  EXPECT_EQ(first.substr(0, 8), "      4 ") << first;
  EXPECT_EQ(first.back(), '*');
}

TEST_F(CliTest, LocalizeInputErrors) {
  EXPECT_EQ(run_cli({"localize", (dir_ / "missing.csv").string()}).code, cli::kInputError);

  const Outcome no_col = run_cli({"localize", write("a.csv", "ax,ay\n0,0\n1,0\n0,1\n")});
  EXPECT_EQ(no_col.code, cli::kInputError);
  EXPECT_NE(no_col.err.find("range"), std::string::npos);

  const Outcome bad_num = run_cli({"localize", write("b.csv", "ax,ay,range\n0,0,1\n1,0,x\n0,1,1\n")});
  EXPECT_EQ(bad_num.code, cli::kInputError);
  EXPECT_NE(bad_num.err.find("3"), std::string::npos);

  EXPECT_EQ(run_cli({"localize", noiseless_csv(), "--sigma", "1", "--epsilon", "2"}).code, cli::kInputError);
  EXPECT_EQ(run_cli({"localize", noiseless_csv(), "--method", "sr-magic"}).code, cli::kInputError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kInputError);
}

TEST_F(CliTest, LocalizeDegenerateGeometry) {
  const Outcome o = run_cli({"localize", write("line.csv", "ax,ay,range\n0,0,5\n1,0,5\n2,0,5\n3,0,5\n"), "--sigma", "1"});
  EXPECT_EQ(o.code, cli::kDegenerateGeometry);
}

TEST_F(CliTest, LocalizeWritesAReportFile) {
  const fs::path report = dir_ / "report.txt";
  const Outcome o = run_cli({"localize", noiseless_csv(), "--sigma", "1", "-o", report.string()});
  ASSERT_EQ(o.code, cli::kOk) << o.err;
  EXPECT_NE(read(report).find("x_hat"), std::string::npos);
}

TEST_F(CliTest, SimulateIsByteIdenticalAcrossRunsAndWorkers) {
  const fs::path a = dir_ / "a", b = dir_ / "b";
  const Outcome ra = run_cli({"simulate", "--builtin", "scenario1", "--trials", "8", "--seed", "7", "--fisher-samples",
                              "2000", "--workers", "1", "-o", a.string()});
  const Outcome rb = run_cli({"simulate", "--builtin", "scenario1", "--trials", "8", "--seed", "7", "--fisher-samples",
                              "2000", "--workers", "4", "-o", b.string()});
  ASSERT_EQ(ra.code, cli::kOk) << ra.err;
  ASSERT_EQ(rb.code, cli::kOk) << rb.err;
  EXPECT_EQ(read(a / "results.csv"), read(b / "results.csv"));
  EXPECT_EQ(read(a / "results.json"), read(b / "results.json"));
  EXPECT_NE(ra.out.find("sr_hybrid"), std::string::npos);
}

TEST_F(CliTest, SimulateSweepRows) {
  const Outcome o = run_cli({"simulate", "--builtin", "scenario1", "--trials", "2", "--seed", "1", "--fisher-samples",
                             "1000", "--method", "sr_ls", "--sweep", "beta=0:0.1:1"});
  ASSERT_EQ(o.code, cli::kOk) << o.err;
  EXPECT_EQ(std::count(o.out.begin(), o.out.end(), '\n'), 12);
  EXPECT_NE(o.out.find("\n1,sr_ls,"), std::string::npos);
}

TEST_F(CliTest, SimulateRerunsFromResultsJson) {
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run_cli({"simulate", "--builtin", "scenario2", "--trials", "3", "--seed", "99", "--fisher-samples", "1000",
                     "--sweep", "beta=0.2,0.6", "-o", a.string()})
                .code,
            cli::kOk);
  const Outcome again = run_cli({"simulate", (a / "results.json").string(), "-o", b.string()});
  ASSERT_EQ(again.code, cli::kOk) << again.err;
  EXPECT_EQ(read(a / "results.csv"), read(b / "results.csv"));
}

TEST_F(CliTest, SimulateSpecErrors) {
  const Outcome o = run_cli({"simulate", write("spec.json", R"({"scenario": "scenario1", "noise": {"beta": 2}})")});
  EXPECT_EQ(o.code, cli::kInputError);
  EXPECT_NE(o.err.find("/noise/beta"), std::string::npos);
  EXPECT_EQ(run_cli({"simulate"}).code, cli::kInputError);
  EXPECT_EQ(run_cli({"simulate", "--builtin", "scenario1", "--sweep", "gamma=1:1:2"}).code, cli::kInputError);
}

TEST_F(CliTest, SimulateCampaignFailure) {
  const std::string spec = write("line.json", R"({"scenario": "custom", "trials": 2, "fisher_samples": 1000,
    "sensors": {"positions": [[0, 0], [1000, 0], [2000, 0], [3000, 0]]},
    "target_box": {"lower": [0, 0], "upper": [1000, 1000]}})");
  EXPECT_EQ(run_cli({"simulate", spec}).code, cli::kCampaignFailed);
}

TEST_F(CliTest, CrlbSymmetricCross) {
  const Outcome o = run_cli({"crlb", "--sensor", "1000,0", "--sensor", "-1000,0", "--sensor", "0,1000", "--sensor",
                             "0,-1000", "--target", "0,0", "--sigma", "55"});
  ASSERT_EQ(o.code, cli::kOk) << o.err;
  const auto pos = o.out.find("crlb_gauss");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(o.out.substr(pos + 13)), 55.0 / std::sqrt(2.0), 1e-9);
  const auto mc = o.out.find("crlb_rmse");
  EXPECT_NEAR(std::stod(o.out.substr(mc + 13)), 55.0 / std::sqrt(2.0), 0.01 * 55.0 / std::sqrt(2.0));
}

TEST_F(CliTest, CrlbErrors) {
  EXPECT_EQ(run_cli({"crlb", "--sensor", "0,0", "--target", "1,1"}).code, cli::kInputError);
  EXPECT_EQ(run_cli({"crlb", "--sensor", "0,0", "--sensor", "1,0", "--sensor", "2,0", "--target", "5,0"}).code,
            cli::kDegenerateGeometry);
  EXPECT_EQ(run_cli({"crlb", "--builtin", "scenario2", "--target", "1000,500", "--uniform", "10", "--nlos", "1,2"}).code,
            cli::kInputError);
  EXPECT_EQ(run_cli({"crlb", "--builtin", "scenario2", "--target", "1000,500", "--mc-samples", "10"}).code,
            cli::kInputError);
}

TEST_F(CliTest, CrlbBuiltinScenarioTwo) {
  const Outcome o = run_cli({"crlb", "--builtin", "scenario2", "--target", "1500,500", "--mc-samples", "100000"});
  ASSERT_EQ(o.code, cli::kOk) << o.err;
  EXPECT_NE(o.out.find("fisher "), std::string::npos);
  EXPECT_EQ(o.out.find("fisher_gauss"), std::string::npos);
}

}  // namespace
}  // namespace srloc
