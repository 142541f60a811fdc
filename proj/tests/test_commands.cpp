#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "abcond/commands.hpp"

using namespace abcond;

namespace {

class CommandTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / fmt::format("abcond_cmd_{}_{}", info->test_suite_name(), info->name());
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  int exec(const std::string& command, const std::string& ini, const std::string& sub = "out",
           unsigned jobs = 1) {
    CommandOptions o;
    o.out = root_ / sub;
    o.jobs = jobs;
    o.log = &log_;
    o.err = &err_;
    return execute(command, load_config_string(ini), o);
  }

  CsvTable table(const fs::path& rel) const { return read_csv_file(root_ / rel); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path root_;
  std::ostringstream log_, err_;
};

const char* kEx1Sgd = R"([problem]
tag = example1
[optimizer]
rule = sgd
gamma = 0.25
[run]
K = 1000
seeds = 7
x0 = 4, -3
)";

}  // namespace

TEST_F(CommandTest, RunWritesOneRowPerStep) {
  ASSERT_EQ(exec("run", kEx1Sgd), kExitOk) << err_.str();
  const auto t = table("out/seed-7/trajectory.csv");
  EXPECT_EQ(t.rows.size(), 1000u);
  std::ifstream meta(root_ / "out/seed-7/trajectory.meta");
  const auto kv = read_meta(meta);
  EXPECT_EQ(kv.at("seed"), "7");
  std::istringstream xs(kv.at("x_final"));
  Point xK(2);
  xs >> xK[0] >> xK[1];
  const auto p = make_example1();
  EXPECT_LT(dist_sq(xK, p.project(xK)), dist_sq(Point{4, -3}, p.project(Point{4, -3})));
}

TEST_F(CommandTest, SingleStepRun) {
  std::string ini = kEx1Sgd;
  ini.replace(ini.find("K = 1000"), 8, "K = 1");
  ASSERT_EQ(exec("run", ini), kExitOk);
  EXPECT_EQ(table("out/seed-7/trajectory.csv").rows.size(), 1u);
}

TEST_F(CommandTest, NgnOnNegativeComponentExits3) {
  const int rc = exec("run", "[problem]\ntag = quadratic\ncenters = 1, 1; -1, 2\noffset = -0.5\n"
                             "[optimizer]\nrule = ngn\ngamma = 1\n[run]\nK = 10\nx0 = 1, 1\n");
  EXPECT_EQ(rc, kExitDivergence);
  EXPECT_NE(err_.str().find("ngn"), std::string::npos);
  EXPECT_NE(err_.str().find("at step"), std::string::npos);
}

TEST_F(CommandTest, DivergenceReportsStep) {
  const int rc = exec("run", "[problem]\ntag = quadratic\ncenters = 0\n"
                             "[optimizer]\nrule = sgd\ngamma = 10\n[run]\nK = 100\nx0 = 1\n");
  EXPECT_EQ(rc, kExitDivergence);
  EXPECT_NE(err_.str().find("divergence at step"), std::string::npos);
}

TEST_F(CommandTest, UnknownTagAndUnwritableOutput) {
  EXPECT_EQ(exec("run", "[problem]\ntag = example5\n"), kExitConfig);
  std::ofstream(root_.string() + "_blocker") << "x";
  CommandOptions o;
  o.out = fs::path(root_.string() + "_blocker") / "sub";
  o.log = &log_;
  o.err = &err_;
  EXPECT_EQ(execute("run", load_config_string(kEx1Sgd), o), kExitConfig);
  fs::remove(root_.string() + "_blocker");
}

TEST_F(CommandTest, CheckConditionExample1Exact) {
  const std::string ini = R"([problem]
tag = example1
[optimizer]
rule = sgd
gamma = 0.05
[run]
K = 2000
seeds = 0,1,2
x0 = gaussian(0, 3)
[grid]
projection = exact
alpha_min = 2.5
alpha_max = 2.5
alpha_points = 1
beta_min = 2
beta_max = 2
beta_points = 1
beta_include_zero = true
)";
  ASSERT_EQ(exec("check-condition", ini), kExitOk) << err_.str();
  const auto g = table("out/grid.csv");
  ASSERT_EQ(g.rows.size(), 2u);
  EXPECT_EQ(std::stod(g.rows[1][0]), 2.5);
  EXPECT_EQ(std::stod(g.rows[1][1]), 2.0);
  EXPECT_EQ(g.rows[1][3], "1");
  EXPECT_EQ(g.rows[0][3], "0");
  const auto c = table("out/condition.csv");
  EXPECT_EQ(c.rows.size(), 6000u);
  EXPECT_TRUE(fs::exists(root_ / "out/heatmap.svg"));
  EXPECT_TRUE(fs::exists(root_ / "out/seed-2/trajectory.csv"));
}

TEST_F(CommandTest, CheckConditionExample7BetaZeroInfeasible) {
  const std::string ini = R"([problem]
tag = example7
[optimizer]
rule = sgd
gamma = 0.1
[run]
K = 3000
seeds = 0,1,2,3
x0 = gaussian(0, 2)
[grid]
projection = exact
beta_include_zero = true
beta_min = 41
beta_max = 41
beta_points = 1
)";
  ASSERT_EQ(exec("check-condition", ini, "out", 4), kExitOk) << err_.str();
  const auto g = table("out/grid.csv");
  std::size_t zero_rows = 0;
  for (const auto& r : g.rows)
    if (std::stod(r[1]) == 0.0) {
      ++zero_rows;
      EXPECT_EQ(r[3], "0") << "alpha " << r[0];
    }
  EXPECT_EQ(zero_rows, 150u);
  EXPECT_NE(log_.str().find("infeasible for every alpha"), std::string::npos);
}

TEST_F(CommandTest, EmptyBetaGridIsUsageError) {
  auto c = load_config_string(kEx1Sgd);
  c.beta_points = 0;
  CommandOptions o;
  o.out = root_ / "out";
  o.log = &log_;
  o.err = &err_;
  EXPECT_EQ(execute("check-condition", c, o), kExitConfig);
  EXPECT_NE(err_.str().find("beta grid is empty"), std::string::npos);
}

TEST_F(CommandTest, CaptionSignFlagChangesGrid) {
  const std::string ini = std::string(kEx1Sgd) + "[grid]\nalpha_points = 12\nbeta_points = 12\n";
  CommandOptions o;
  o.log = &log_;
  o.err = &err_;
  o.out = root_ / "def";
  ASSERT_EQ(execute("check-condition", load_config_string(ini), o), kExitOk);
  o.out = root_ / "cap";
  o.caption_sign = true;
  ASSERT_EQ(execute("check-condition", load_config_string(ini), o), kExitOk);
  EXPECT_NE(slurp(root_ / "def/grid.csv"), slurp(root_ / "cap/grid.csv"));
  EXPECT_EQ(slurp(root_ / "def/condition.csv"), slurp(root_ / "cap/condition.csv"));
}

TEST_F(CommandTest, NoSvgFlag) {
  CommandOptions o;
  o.out = root_ / "out";
  o.no_svg = true;
  o.log = &log_;
  o.err = &err_;
  ASSERT_EQ(execute("check-condition", load_config_string(std::string(kEx1Sgd) + "[grid]\nalpha_points = 5\n"), o),
            kExitOk);
  EXPECT_FALSE(fs::exists(root_ / "out/heatmap.svg"));
  EXPECT_TRUE(fs::exists(root_ / "out/grid.csv"));
}

TEST_F(CommandTest, ByteIdenticalAcrossRunsAndWorkerCounts) {
  const std::string ini = R"([problem]
tag = matrix_factorization
n = 6
m = 5
k = 2
noise_sd = 0.1
seed = 3
[optimizer]
rule = sps_max
c = 1
gamma_b = 0.5
[run]
K = 400
seeds = 0,1,2,3
x0 = gaussian(0.5)
record_full_loss_every = 7
[grid]
alpha_points = 40
beta_points = 40
beta_include_zero = true
)";
  ASSERT_EQ(exec("check-condition", ini, "a", 1), kExitOk) << err_.str();
  ASSERT_EQ(exec("check-condition", ini, "b", 4), kExitOk);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(root_ / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root_ / "a");
    EXPECT_EQ(slurp(e.path()), slurp(root_ / "b" / rel)) << rel;
    ++compared;
  }
  EXPECT_EQ(compared, 1u + 1u + 1u + 1u + 4u * 2u);  // condition, grid, svg, dataset, per-seed pairs
}

// Interpolating components, so x^K converges to the common minimizer. With
// distinct centers the noisy tail of SGD around x^K produces obtuse angles.
TEST_F(CommandTest, DiagnoseConvexQuadraticAnglesAtMostRightAngle) {
  ASSERT_EQ(exec("diagnose", "[problem]\ntag = quadratic\ncenters = 1, 0.5; 1, 0.5; 1, 0.5\n"
                             "[optimizer]\nrule = sgd\ngamma = 0.3\n[run]\nK = 500\nseeds = 0,1\nx0 = 5, 5\n"),
            kExitOk)
      << err_.str();
  for (const char* seed : {"seed-0", "seed-1"}) {
    const auto t = table(fs::path("out") / seed / "angle.csv");
    ASSERT_EQ(t.rows.size(), 500u);
    for (const auto& r : t.rows)
      if (!r[1].empty()) {
        EXPECT_LE(std::stod(r[1]), std::numbers::pi / 2 + 1e-12);
      }
  }
  const auto pl = table("out/seed-0/pl.csv");
  EXPECT_EQ(pl.rows.size(), 500u * default_pl_deltas().size());
}

TEST_F(CommandTest, DiagnoseExample2NearSaddle) {
  ASSERT_EQ(exec("diagnose", "[problem]\ntag = example2\n[optimizer]\nrule = sgd\ngamma = 0.05\n"
                             "[run]\nK = 3000\nx0 = 1.000001, 0.999999\n"),
            kExitOk);
  const auto pl = table("out/seed-0/pl.csv");
  double lowest = INFINITY;
  for (const auto& r : pl.rows)
    if (r[3] == "0") lowest = std::min(lowest, std::stod(r[2]));
  EXPECT_LT(lowest, -20.0);
}

TEST_F(CommandTest, BoundsExample1SgdAtMaxStepsizePasses) {
  const std::string ini = R"([problem]
tag = example1
[optimizer]
rule = sgd
gamma = max
[run]
seeds = 0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19
x0 = gaussian(0, 3)
[theory]
alpha = 2.5
beta = 2.0
K = 10000
)";
  ASSERT_EQ(exec("bounds", ini, "out", 4), kExitOk) << log_.str() << err_.str();
  EXPECT_NE(log_.str().find("PASS"), std::string::npos);
  const auto t = table("out/bounds.csv");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "sgd");
  EXPECT_EQ(t.rows[0][1], "10000");
  EXPECT_TRUE(fs::exists(root_ / "out/bounds_report.txt"));
}

TEST_F(CommandTest, BoundsDoubledStepsizeIsHypothesisViolation) {
  const auto L = *make_example1().smoothness;
  const std::string ini = fmt::format(
      "[problem]\ntag = example1\n[optimizer]\nrule = sgd\ngamma = {:.17g}\n[run]\nK = 100\n"
      "[theory]\nalpha = 2.5\nbeta = 2.0\n",
      2.0 * 0.5 / (2.0 * L));
  EXPECT_EQ(exec("bounds", ini), kExitHypothesis);
  EXPECT_NE(err_.str().find("hypothesis"), std::string::npos);
}

TEST_F(CommandTest, BoundsSigmaOverrideMismatchIsFlagged) {
  const std::string ini = "[problem]\ntag = example1\n[optimizer]\nrule = sgd\ngamma = 0.05\n"
                          "[run]\nK = 200\nseeds = 0,1\n[theory]\nalpha = 2.5\nbeta = 2.0\nsigma_int_sq = 0\n";
  exec("bounds", ini);
  EXPECT_NE(log_.str().find("WARNING: sigma_int^2 override"), std::string::npos);
}

TEST_F(CommandTest, BoundsNgnOnExample7) {
  const std::string ini = "[problem]\ntag = example7\n[optimizer]\nrule = ngn\ngamma = 0.5\n"
                          "[run]\nseeds = 0,1,2,3\nx0 = gaussian(0, 2)\n[theory]\nalpha = 42\nbeta = 41\nK = 100, 1000\n";
  EXPECT_EQ(exec("bounds", ini), kExitOk) << log_.str() << err_.str();
  EXPECT_EQ(table("out/bounds.csv").rows.size(), 2u);
}

TEST_F(CommandTest, SeedOverrideEnvironment) {
  ::setenv("ABCOND_SEED_OVERRIDE", "3,4", 1);
  const int rc = exec("run", kEx1Sgd);
  ::unsetenv("ABCOND_SEED_OVERRIDE");
  ASSERT_EQ(rc, kExitOk);
  EXPECT_TRUE(fs::exists(root_ / "out/seed-3/trajectory.csv"));
  EXPECT_TRUE(fs::exists(root_ / "out/seed-4/trajectory.csv"));
  EXPECT_FALSE(fs::exists(root_ / "out/seed-7"));
}

TEST_F(CommandTest, ReproducePlSweepAndUnknownTag) {
  CommandOptions o;
  o.out = root_ / "pl";
  o.log = &log_;
  o.err = &err_;
  EXPECT_EQ(guarded([&] { return cmd_reproduce("pl-sweep", o); }, err_), kExitOk) << err_.str();
  EXPECT_TRUE(fs::exists(root_ / "pl/config.ini"));
  EXPECT_TRUE(fs::exists(root_ / "pl/seed-0/pl.csv"));
  EXPECT_EQ(guarded([&] { return cmd_reproduce("fig9", o); }, err_), kExitConfig);
}

TEST(Guarded, ErrorMapping) {
  std::ostringstream err;
  EXPECT_EQ(guarded([]() -> int { throw DeterminismError("x"); }, err), kExitDeterminism);
  EXPECT_EQ(guarded([]() -> int { throw HypothesisError("x"); }, err), kExitHypothesis);
  EXPECT_EQ(guarded([]() -> int { throw ContractViolation("x"); }, err), kExitConfig);
  EXPECT_EQ(guarded([]() -> int { throw DivergenceError("x", 5); }, err), kExitDivergence);
  EXPECT_EQ(guarded([] { return 0; }, err), kExitOk);
}
