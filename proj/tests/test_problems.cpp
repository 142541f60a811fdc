#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "abcond/diagnostics.hpp"
#include "abcond/problems.hpp"
#include "test_util.hpp"

using namespace abcond;
using abcond::testing::max_grad_error;
using abcond::testing::uniform_point;

namespace {

double min_t_exact(const FiniteSumProblem& p, double alpha, double beta, std::size_t points,
                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = INFINITY;
  for (std::size_t t = 0; t < points; ++t) {
    const Point x = uniform_point(rng, p.certificate->box);
    const Point xp = p.project(x);
    for (std::size_t i = 0; i < p.n; ++i) {
      const auto rec = condition_record(p, i, x, xp, p.component_lower_bound(i));
      worst = std::min(worst, t_value(rec, alpha, beta));
    }
  }
  return worst;
}

void expect_near_point(const Point& a, const Point& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], tol) << "coordinate " << j;
}

}  // namespace

// --- Example 1 --------------------------------------------------------------

TEST(Example1, ProjectionOfOrigin) {
  expect_near_point(make_example1().project({0.0, 0.0}), {-0.25, -0.25}, 1e-15);
}

TEST(Example1, ComponentValuesOnSolutionLine) {
  auto p = make_example1();
  for (double u : {-3.0, -0.25, 0.0, 1.5, 7.0}) {
    const Point x{u, -0.5 - u};
    EXPECT_NEAR(p.component_value(0, x), 0.2, 1e-15);
    EXPECT_NEAR(p.component_value(1, x), 0.2, 1e-15);
  }
  EXPECT_EQ(p.component_value(0, {0.0, 0.0}), 0.0);
}

TEST(Example1, Constants) {
  auto p = make_example1();
  EXPECT_EQ(p.n, 2u);
  EXPECT_EQ(p.d, 2u);
  EXPECT_EQ(*p.global_min, 0.2);
  EXPECT_EQ((*p.component_min), (std::vector<double>{0.0, 0.0}));
  // sigma_int^2 = f* - mean f_i^*
  EXPECT_NEAR(empirical_sigma_int(p), 0.2, 1e-15);
  EXPECT_GE(*p.smoothness, 4.0);
  const auto& c = *p.certificate;
  EXPECT_EQ(c.alpha_min, 2.5);
  EXPECT_TRUE(c.admits(2.5, 2.0));
  EXPECT_TRUE(c.admits(10.0, 9.0));
  EXPECT_FALSE(c.admits(2.5, 2.5));
  EXPECT_FALSE(c.admits(2.5, 1.9));
  EXPECT_FALSE(c.admits(2.4, 2.0));
}

TEST(Example1, CertifiedPairFeasible) {
  EXPECT_GE(min_t_exact(make_example1(), 2.5, 2.0, 10000, 1), -1e-9);
}

TEST(Example1, CertifiedRegionFeasibleAtOtherAdmissiblePairs) {
  auto p = make_example1();
  for (auto [a, b] : {std::pair{2.5, 2.4}, {5.0, 4.0}, {100.0, 99.0}}) {
    ASSERT_TRUE(p.certificate->admits(a, b));
    EXPECT_GE(min_t_exact(p, a, b, 2000, 2), -1e-9) << a << "," << b;
  }
}

TEST(Example1, BetaZeroInfeasible) {
  auto p = make_example1();
  for (double alpha : {0.5, 1.0, 2.5, 10.0, 100.0})
    EXPECT_LT(min_t_exact(p, alpha, 0.0, 10000, 3), 0.0) << "alpha " << alpha;
}

// --- Example 2 --------------------------------------------------------------

TEST(Example2, LocatedMinimizers) {
  auto p = make_example2();
  ASSERT_EQ(p.solution_points.size(), 2u);
  expect_near_point(p.solution_points[0], {0.00067, 0.00067}, 1e-3);
  expect_near_point(p.solution_points[1], {1.99932, 1.99932}, 1e-3);
  for (const auto& s : p.solution_points) EXPECT_LE(norm(full_grad(p, s)), 1e-12);
}

TEST(Example2, SaddleAtOneOne) {
  auto p = make_example2();
  EXPECT_LE(norm(full_grad(p, {1.0, 1.0})), 1e-14);
  EXPECT_NEAR(full_loss(p, {1.0, 1.0}), 1.0 - std::exp(-2.0), 1e-15);
  // f(1,1) - f* = (1 - e^-2) - (1 - e^-8 - ...)/2, about 0.3648
  EXPECT_NEAR(full_loss(p, {1.0, 1.0}) - *p.global_min, 0.364833, 1e-6);
  EXPECT_EQ(p.component_value(0, {0.0, 0.0}), 0.0);
}

TEST(Example2, ProjectionPicksNearestMinimizer) {
  auto p = make_example2();
  expect_near_point(p.project({-1.0, 0.5}), p.solution_points[0], 0.0);
  expect_near_point(p.project({3.0, 3.0}), p.solution_points[1], 0.0);
}

TEST(NearestOf, TieGoesToSmallerFirstCoordinate) {
  const std::vector<Point> c{{2.0, 2.0}, {0.0, 0.0}};
  expect_near_point(nearest_of(c, {1.0, 1.0}), {0.0, 0.0}, 0.0);
  expect_near_point(nearest_of(c, {1.0, 1.5}), {2.0, 2.0}, 0.0);
  EXPECT_THROW(nearest_of({}, {0.0}), ContractViolation);
}

// --- Example 7 --------------------------------------------------------------

TEST(Example7, LocatedMinimizersAndOptimum) {
  auto p = make_example7();
  ASSERT_EQ(p.solution_points.size(), 2u);
  expect_near_point(p.solution_points[0], {0.159375, 0.159375}, 1e-5);
  expect_near_point(p.solution_points[1], {0.840625, 0.840625}, 1e-5);
  EXPECT_NEAR(*p.global_min, 0.316988, 1e-6);
  EXPECT_EQ(p.component_value(0, {0.0, 0.0}), 0.0);
}

TEST(Example7, ConstantC) {
  auto p = make_example7();
  double c = INFINITY;
  for (const auto& s : p.solution_points)
    for (std::size_t i = 0; i < p.n; ++i) c = std::min(c, p.component_value(i, s));
  EXPECT_NEAR(c, 0.048345, 1e-6);
}

TEST(Example7, CertifiedPairFeasible) {
  auto p = make_example7();
  ASSERT_TRUE(p.certificate->admits(42.0, 41.0));
  EXPECT_FALSE(p.certificate->admits(42.0, 0.0));
  EXPECT_GE(min_t_exact(p, 42.0, 41.0, 10000, 4), -1e-9);
}

TEST(Example7, BetaZeroInfeasible) {
  auto p = make_example7();
  for (double alpha : {0.5, 1.0, 2.5, 10.0, 42.0, 100.0, 1e4})
    EXPECT_LT(min_t_exact(p, alpha, 0.0, 10000, 5), 0.0) << "alpha " << alpha;
}

// --- Example 10 -------------------------------------------------------------

TEST(Example10, ReportedValues) {
  auto p = make_example10();
  EXPECT_EQ(p.component_value(0, {0.0, 0.0}), 0.25);
  EXPECT_EQ((*p.component_min)[0], 0.25);
  EXPECT_NEAR(full_loss(p, {0.0, 0.0}), 0.587963, 5e-7);
  EXPECT_NEAR(full_loss(p, {2.5, 2.5}), 0.409091, 5e-7);
  EXPECT_NEAR(p.component_value(1, {2.471, 2.471}), 0.00167918, 5e-9);
}

TEST(Example10, GlobalMinimizer) {
  auto p = make_example10();
  ASSERT_EQ(p.solution_points.size(), 1u);
  expect_near_point(p.solution_points[0], {2.471, 2.471}, 1e-3);
  EXPECT_NEAR(*p.global_min, 0.408, 1e-3);
  EXPECT_LE(norm(full_grad(p, p.solution_points[0])), 1e-12);
}

TEST(Example10, SpuriousCriticalPointHasLargerValue) {
  auto p = make_example10();
  const auto local = locate_critical_point(p, {0.0, 0.0});
  EXPECT_LE(local.grad_norm, 1e-12);
  EXPECT_GT(local.value - *p.global_min, 0.1);
}

// --- Ratio family -----------------------------------------------------------

TEST(RatioFamily, ScalarMatchesExample1) {
  auto r = make_ratio_family(2, 2, std::vector<double>{0.0, 1.0});
  auto e = make_example1();
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    const Point x = uniform_point(rng, 2, 10.0);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(r.component_value(i, x), e.component_value(i, x));
      EXPECT_EQ(r.component_grad(i, x), e.component_grad(i, x));
    }
  }
  EXPECT_FALSE(r.has_projection());
}

TEST(RatioFamily, VectorMatchesExample7) {
  auto r = make_ratio_family(2, 2, std::vector<Point>{{0.0, 0.0}, {1.0, 1.0}});
  auto e = make_example7();
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const Point x = uniform_point(rng, 2, 5.0);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(r.component_value(i, x), e.component_value(i, x));
  }
}

TEST(RatioFamily, SingleVectorOffsetAtOrigin) {
  auto r = make_ratio_family(1, 3, std::vector<Point>{{0.0, 0.0, 0.0}});
  EXPECT_EQ(r.component_value(0, {0.0, 0.0, 0.0}), 0.0);
}

TEST(RatioFamily, ShapeMismatch) {
  EXPECT_THROW(make_ratio_family(3, 2, std::vector<double>{0.0, 1.0}), ContractViolation);
  EXPECT_THROW(make_ratio_family(2, 2, std::vector<Point>{{0.0}, {1.0, 1.0}}), ContractViolation);
  EXPECT_THROW(make_ratio_family(0, 2, std::vector<double>{}), ContractViolation);
}

TEST(RatioFamily, HigherDimensionalGradients) {
  auto r = make_ratio_family(5, 4, std::vector<double>{0.0, 1.0, -2.0, 0.5, 3.0});
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) EXPECT_LE(max_grad_error(r, uniform_point(rng, 4, 3.0)), 1e-5);
}

// --- Matrix factorization ---------------------------------------------------

TEST(MatrixFactorization, HandExample) {
  auto p = make_matrix_factorization_from(DataArray{"X", 1, 1, {2.0}}, 1);
  EXPECT_EQ(p.component_value(0, {1.0, 1.0}), 0.5);
  EXPECT_EQ(p.component_grad(0, {1.0, 1.0}), (Point{-1.0, -1.0}));
}

TEST(MatrixFactorization, NoiselessTruthHasZeroLoss) {
  auto p = make_matrix_factorization(6, 5, 2, 0.0, 13);
  const auto& ds = *p.dataset;
  EXPECT_NEAR(full_loss(p, pack_factors(ds.array("W_star"), ds.array("S_star"))), 0.0, 1e-28);
}

TEST(MatrixFactorization, FullLossIsScaledFrobenius) {
  auto p = make_matrix_factorization(4, 3, 2, 0.5, 2);
  std::mt19937_64 rng(1);
  const Point x = uniform_point(rng, p.d, 2.0);
  const auto& X = p.dataset->array("X");
  double fro = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double ws = x[i * 2] * x[8 + j * 2] + x[i * 2 + 1] * x[8 + j * 2 + 1];
      fro += (X.at(i, j) - ws) * (X.at(i, j) - ws);
    }
  EXPECT_NEAR(full_loss(p, x), fro / (2.0 * 12.0), 1e-13);
}

TEST(MatrixFactorization, GradientCheck) {
  auto p = make_matrix_factorization(8, 6, 2, 0.1, 3);
  EXPECT_EQ(p.n, 48u);
  EXPECT_EQ(p.d, 28u);
  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) worst = std::max(worst, max_grad_error(p, uniform_point(rng, *p.box)));
  EXPECT_LE(worst, 1e-5);
}

TEST(MatrixFactorization, InvalidShapes) {
  EXPECT_THROW(make_matrix_factorization(2, 3, 3, 0.1, 0), ContractViolation);
  EXPECT_THROW(make_matrix_factorization(0, 3, 1, 0.1, 0), ContractViolation);
  EXPECT_THROW(make_matrix_factorization(2, 3, 1, -0.1, 0), ContractViolation);
}

// --- Half-space -------------------------------------------------------------

TEST(Halfspace, HalfAtOrigin) {
  auto p = make_halfspace(20, 10, 1e-5, 0);
  EXPECT_EQ(p.n, 40u);
  for (std::size_t i = 0; i < p.n; ++i) EXPECT_EQ(p.component_value(i, Point(10, 0.0)), 0.5);
}

TEST(Halfspace, SigmoidTailVanishes) {
  auto p = make_halfspace(5, 3, 0.0, 1);
  const auto& A = p.dataset->array("A");
  const auto& b = p.dataset->array("b");
  const std::size_t i = 0;
  ASSERT_EQ(b.at(i, 0), 1.0);
  Point dir{A.at(i, 0), A.at(i, 1), A.at(i, 2)};
  double prev = 1.0;
  for (double t : {1.0, 10.0, 100.0, 1e4}) {
    Point x = dir;
    for (auto& v : x) v *= t;
    const double f = p.component_value(i, x);
    EXPECT_LT(f, prev);
    prev = f;
  }
  EXPECT_LT(prev, 1e-30);
}

TEST(Halfspace, LabelsAndClasses) {
  auto p = make_halfspace(20, 10, 1e-5, 0);
  const auto& b = p.dataset->array("b");
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(b.at(i, 0), i < 20 ? 1.0 : -1.0);
}

TEST(Halfspace, GradientCheckNearOrigin) {
  auto p = make_halfspace(20, 10, 1e-5, 0);
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) worst = std::max(worst, max_grad_error(p, uniform_point(rng, p.d, 0.1)));
  EXPECT_LE(worst, 1e-5);
}

TEST(Halfspace, GradientCheckFlooredOnBox) {
  // Coordinates with |grad| near 1e-8 are dominated by difference roundoff,
  // so the error is scaled by max(|grad|, 1e-4).
  auto p = make_halfspace(20, 10, 1e-5, 0);
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t)
    worst = std::max(worst, abcond::testing::floored_grad_error(p, uniform_point(rng, *p.box), 1e-4));
  EXPECT_LE(worst, 1e-5);
}

// --- Two-layer ReLU ---------------------------------------------------------

TEST(TwoLayerRelu, ZeroWeightsGiveLogTwo) {
  auto p = make_two_layer_relu(10, 4, 3, 1e-3, 1e-3, 0);
  for (std::size_t i = 0; i < p.n; ++i)
    EXPECT_NEAR(p.component_value(i, Point(p.d, 0.0)), std::log(2.0), 1e-15);
  EXPECT_NEAR(std::log(2.0), 0.693147, 1e-6);
}

TEST(TwoLayerRelu, StableLogisticLoss) {
  const double at50 = logistic_loss(50.0);
  EXPECT_TRUE(std::isfinite(at50));
  EXPECT_LE(at50, 2e-22);
  EXPECT_NEAR(at50, 1.9287498479639178e-22, 1e-36);  // log1p(exp(-50))
  const double big = logistic_loss(-1e4);
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_EQ(big, 1e4);
  EXPECT_NEAR(logistic_loss(0.0), std::log(2.0), 1e-16);
  EXPECT_TRUE(std::isfinite(logistic_loss_derivative(-1e4)));
  EXPECT_EQ(logistic_loss_derivative(-1e4), -1.0);
}

TEST(TwoLayerRelu, LinearlySeparableWithMargin) {
  auto p = make_two_layer_relu(64, 6, 4, 1e-3, 1e-3, 5);
  const auto& X = p.dataset->array("X");
  const auto& y = p.dataset->array("y");
  const auto& w = p.dataset->array("w_star");
  for (std::size_t i = 0; i < 64; ++i) {
    double t = 0.0;
    for (std::size_t j = 0; j < 6; ++j) t += X.at(i, j) * w.at(0, j);
    EXPECT_GE(y.at(i, 0) * t, 0.5 - 1e-12);
  }
}

TEST(TwoLayerRelu, GradientCheckAwayFromKinks) {
  auto p = make_two_layer_relu(32, 8, 16, 1e-3, 1e-3, 1);
  EXPECT_EQ(p.d, 16u * 8u + 16u);
  std::mt19937_64 rng(12);
  int accepted = 0;
  double worst = 0.0;
  while (accepted < 100) {
    const Point x = uniform_point(rng, *p.box);
    bool near_kink = false;
    for (double h : relu_preactivations(p, x)) near_kink |= std::abs(h) < 1e-4;
    if (near_kink) continue;
    ++accepted;
    worst = std::max(worst, abcond::testing::floored_grad_error(p, x, 1e-4));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(TwoLayerRelu, RequiresPositiveRegularizers) {
  EXPECT_THROW(make_two_layer_relu(4, 2, 2, 0.0, 1e-3, 0), ContractViolation);
}

// --- Generated data ---------------------------------------------------------

TEST(GeneratedData, RegenerationIsIdentical) {
  auto a = make_halfspace(20, 10, 1e-5, 42), b = make_halfspace(20, 10, 1e-5, 42);
  EXPECT_EQ(a.dataset->array("A").values, b.dataset->array("A").values);
  auto c = make_halfspace(20, 10, 1e-5, 43);
  EXPECT_NE(a.dataset->array("A").values, c.dataset->array("A").values);
  auto m1 = make_matrix_factorization(5, 4, 2, 0.3, 7), m2 = make_matrix_factorization(5, 4, 2, 0.3, 7);
  for (std::size_t q = 0; q < m1.dataset->arrays.size(); ++q)
    EXPECT_EQ(m1.dataset->arrays[q].values, m2.dataset->arrays[q].values);
  auto r1 = make_two_layer_relu(8, 3, 2, 1e-3, 1e-3, 9), r2 = make_two_layer_relu(8, 3, 2, 1e-3, 1e-3, 9);
  EXPECT_EQ(r1.dataset->array("X").values, r2.dataset->array("X").values);
  EXPECT_EQ(a.dataset->seed, 42u);
  EXPECT_EQ(a.dataset->family, "halfspace");
}

TEST(Constructors, Fast) {
  // Minimizer location runs once at construction and must stay cheap.
  const auto start = std::chrono::steady_clock::now();
  for (int t = 0; t < 10; ++t) {
    make_example2();
    make_example7();
    make_example10();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 1.0);
}
