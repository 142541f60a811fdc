// Benchmark objectives: the two-dimensional analytic examples with their
// certified (alpha, beta) regions, the ratio families they generalize to, and
// seeded synthetic instances (matrix factorization, half-space learning,
// two-layer ReLU classification).
#pragma once

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "abcond/core.hpp"

namespace abcond {

namespace detail {

inline TestBox square_box(std::size_t d, double half_width) {
  return TestBox{Point(d, -half_width), Point(d, half_width)};
}

/// Safety factor applied to sampled curvature maxima.
inline constexpr double kSmoothnessSafety = 1.05;

/// L for f(x) = g(sum_j x_j + a): the Hessian is g''(s) * 11^T with top
/// eigenvalue d * g''(s). g'' is sampled by central differences of g'.
template <typename DG>
double ridge_smoothness(DG&& dg, std::size_t d, double s_max = 50.0,
                        std::size_t samples = 20001) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double s = -s_max + 2.0 * s_max * static_cast<double>(k) / (samples - 1);
    worst = std::max(worst, std::abs((dg(s + h) - dg(s - h)) / (2.0 * h)));
  }
  return kSmoothnessSafety * static_cast<double>(d) * worst;
}

/// L for f(x) = psi(||x - b||^2). The Hessian 2 psi'(u) I + 4 psi''(u) (x-b)(x-b)^T
/// has eigenvalues phi'(r)/r and phi''(r) for the radial profile phi(r) = psi(r^2);
/// both are sampled on r in [0, r_max], phi'' by central differences.
template <typename DPsi>
double radial_smoothness(DPsi&& dpsi, double r_max = 50.0, std::size_t samples = 20001) {
  const double h = 1e-5;
  auto radial_slope = [&](double r) { return 2.0 * r * dpsi(r * r); };
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double r = r_max * static_cast<double>(k) / (samples - 1);
    const double curvature = (radial_slope(r + h) - radial_slope(r - h)) / (2.0 * h);
    worst = std::max({worst, std::abs(curvature), std::abs(2.0 * dpsi(r * r))});
  }
  return kSmoothnessSafety * worst;
}

inline double sq_dist_to(const Point& x, const Point& center) {
  double u = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double t = x[j] - center[j];
    u += t * t;
  }
  return u;
}

/// Logistic sigmoid, evaluated without overflow for either sign.
inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

/// log(1 + exp(-t)) with the stable branch for negative t.
inline double logistic_loss(double t) {
  if (t >= 0.0) return std::log1p(std::exp(-t));
  return -t + std::log1p(std::exp(t));
}

/// d/dt log(1 + exp(-t)) = -sigmoid(-t).
inline double logistic_loss_derivative(double t) { return -detail::sigmoid(-t); }

// ---------------------------------------------------------------------------
// Critical-point location and finite solution sets
// ---------------------------------------------------------------------------

struct LocatedPoint {
  Point x;
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

/// Solves A x = b by Gaussian elimination with partial pivoting (A is d x d,
/// row-major). Returns nullopt for a numerically singular A.
inline std::optional<Point> solve_dense(std::vector<double> A, Point b) {
  const std::size_t d = b.size();
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(A[r * d + c]) > std::abs(A[piv * d + c])) piv = r;
    if (std::abs(A[piv * d + c]) < 1e-14) return std::nullopt;
    if (piv != c) {
      for (std::size_t k = 0; k < d; ++k) std::swap(A[c * d + k], A[piv * d + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < d; ++r) {
      const double m = A[r * d + c] / A[c * d + c];
      for (std::size_t k = c; k < d; ++k) A[r * d + k] -= m * A[c * d + k];
      b[r] -= m * b[c];
    }
  }
  Point x(d);
  for (std::size_t r = d; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < d; ++k) s -= A[r * d + k] * x[k];
    x[r] = s / A[r * d + r];
  }
  return x;
}

/// Hessian of f by central differences of the analytic full gradient.
inline std::vector<double> fd_hessian(const FiniteSumProblem& problem, const Point& x,
                                      double h = 1e-6) {
  const std::size_t d = x.size();
  std::vector<double> H(d * d);
  Point probe = x;
  for (std::size_t j = 0; j < d; ++j) {
    probe[j] = x[j] + h;
    const Point up = full_grad(problem, probe);
    probe[j] = x[j] - h;
    const Point down = full_grad(problem, probe);
    probe[j] = x[j];
    for (std::size_t r = 0; r < d; ++r) H[r * d + j] = (up[r] - down[r]) / (2.0 * h);
  }
  return H;
}

}  // namespace detail

/// Damped gradient descent on the full objective with Armijo backtracking,
/// stopped when ||grad f|| <= tol. Once the gradient is small, Newton steps
/// on a finite-difference Hessian are tried and kept when they shrink the
/// gradient norm.
inline LocatedPoint locate_critical_point(const FiniteSumProblem& problem, Point start,
                                          double tol = 1e-12,
                                          std::size_t max_iterations = 1'000'000) {
  LocatedPoint out;
  Point x = std::move(start);
  double fx = full_loss(problem, x);
  Point g = full_grad(problem, x);
  double step = 1.0;
  std::size_t it = 0;
  for (; it < max_iterations && norm(g) > tol; ++it) {
    if (norm(g) < 1e-4 && problem.d <= 64) {
      if (auto dx = detail::solve_dense(detail::fd_hessian(problem, x), g)) {
        Point trial = x;
        axpy(-1.0, *dx, trial);
        const Point gt = full_grad(problem, trial);
        if (norm(gt) < norm(g)) {
          x = std::move(trial);
          fx = full_loss(problem, x);
          g = gt;
          continue;
        }
      }
    }
    const double gg = norm_sq(g);
    Point trial = x;
    double ft = 0.0;
    for (;;) {
      trial = x;
      axpy(-step, g, trial);
      ft = full_loss(problem, trial);
      if (ft <= fx - 0.5 * step * gg || step < 1e-12) break;
      step *= 0.5;
    }
    x = std::move(trial);
    fx = ft;
    g = full_grad(problem, x);
    step = std::min(step * 2.0, 1.0);
  }
  out.x = std::move(x);
  out.value = fx;
  out.grad_norm = norm(g);
  out.iterations = it;
  return out;
}

/// Nearest point of a finite set; ties go to the smaller first coordinate.
inline Point nearest_of(const std::vector<Point>& candidates, const Point& x) {
  require(!candidates.empty(), "nearest_of: empty candidate set");
  const Point* best = &candidates.front();
  double best_d = dist_sq(x, *best);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double dk = dist_sq(x, candidates[k]);
    if (dk < best_d || (dk == best_d && candidates[k][0] < (*best)[0])) {
      best = &candidates[k];
      best_d = dk;
    }
  }
  return *best;
}

namespace detail {

/// Locate descent limits from each start, keep the ones attaining the lowest
/// value (within 1e-9), and install them as S with nearest-point projection.
inline void install_finite_solution_set(FiniteSumProblem& p, const std::vector<Point>& starts) {
  std::vector<LocatedPoint> found;
  for (const auto& s : starts) found.push_back(locate_critical_point(p, s));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : found) best = std::min(best, f.value);
  std::vector<Point> solutions;
  for (const auto& f : found)
    if (f.value <= best + 1e-9) solutions.push_back(f.x);
  std::sort(solutions.begin(), solutions.end());
  p.solution_points = solutions;
  p.global_min = best;
  p.project = [solutions](const Point& x) { return nearest_of(solutions, x); };
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ratio families
// ---------------------------------------------------------------------------

/// Scalar offsets a_i (one per component) or offset rows b_i (n x d).
using RatioOffsets = std::variant<std::vector<double>, std::vector<Point>>;

/// f_i(x) = s^2 / (s^2 + 1) with s = sum_j x_j + a_i          (scalar offsets)
/// f_i(x) = u / (1 + u)     with u = sum_j (x_j - b_ij)^2     (row offsets)
inline FiniteSumProblem make_ratio_family(std::size_t n, std::size_t d,
                                          const RatioOffsets& offsets) {
  require(n >= 1 && d >= 1, "ratio family needs n >= 1 and d >= 1");
  FiniteSumProblem p;
  p.n = n;
  p.d = d;
  p.component_min = std::vector<double>(n, 0.0);
  p.component_min_exact = true;

  if (const auto* a = std::get_if<std::vector<double>>(&offsets)) {
    require(a->size() == n, "ratio family: expected n scalar offsets");
    p.tag = "ratio_scalar";
    auto shift = *a;
    auto sum_arg = [shift](std::size_t i, const Point& x) {
      double s = 0.0;
      for (double v : x) s += v;
      return s + shift[i];
    };
    p.value = [sum_arg](std::size_t i, const Point& x) {
      const double s = sum_arg(i, x);
      const double s2 = s * s;
      return s2 / (s2 + 1.0);
    };
    p.grad = [sum_arg, d](std::size_t i, const Point& x) {
      const double s = sum_arg(i, x);
      const double q = 1.0 + s * s;
      return Point(d, 2.0 * s / (q * q));
    };
    p.smoothness = detail::ridge_smoothness(
        [](double s) {
          const double q = 1.0 + s * s;
          return 2.0 * s / (q * q);
        },
        d);
  } else {
    const auto& rows = std::get<std::vector<Point>>(offsets);
    require(rows.size() == n, "ratio family: expected n offset rows");
    for (const auto& r : rows) require(r.size() == d, "ratio family: offset row length != d");
    p.tag = "ratio_vector";
    p.value = [rows](std::size_t i, const Point& x) {
      const double u = detail::sq_dist_to(x, rows[i]);
      return u / (1.0 + u);
    };
    p.grad = [rows](std::size_t i, const Point& x) {
      const double u = detail::sq_dist_to(x, rows[i]);
      const double q = (1.0 + u) * (1.0 + u);
      Point g(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) g[j] = 2.0 * (x[j] - rows[i][j]) / q;
      return g;
    };
    p.smoothness = detail::radial_smoothness([](double u) { return 1.0 / ((1.0 + u) * (1.0 + u)); });
  }
  p.box = detail::square_box(d, 5.0);
  return p;
}

// ---------------------------------------------------------------------------
// Two-dimensional analytic examples
// ---------------------------------------------------------------------------

/// Two ridge ratios whose minimizer set is the line x + y = -1/2.
inline FiniteSumProblem make_example1() {
  auto p = make_ratio_family(2, 2, std::vector<double>{0.0, 1.0});
  p.tag = "example1";
  p.global_min = 0.2;
  p.project = [](const Point& x) {
    return Point{0.5 * (x[0] - x[1] - 0.5), 0.5 * (-x[0] + x[1] - 0.5)};
  };
  p.box = detail::square_box(2, 10.0);
  CertifiedRegion c;
  c.alpha_min = 2.5;
  c.beta_rule = "4*alpha/5 <= beta < alpha";
  c.beta_lo = [](double a) { return 0.8 * a; };
  c.beta_hi = [](double a) { return a; };
  c.box = *p.box;
  p.certificate = c;
  return p;
}

/// Two Gaussian bumps: two isolated minimizers and a saddle at (1, 1).
inline FiniteSumProblem make_example2() {
  FiniteSumProblem p;
  p.tag = "example2";
  p.n = 2;
  p.d = 2;
  const std::vector<Point> centers{{0.0, 0.0}, {2.0, 2.0}};
  p.value = [centers](std::size_t i, const Point& x) {
    return 1.0 - std::exp(-detail::sq_dist_to(x, centers[i]));
  };
  p.grad = [centers](std::size_t i, const Point& x) {
    const double e = std::exp(-detail::sq_dist_to(x, centers[i]));
    return Point{2.0 * (x[0] - centers[i][0]) * e, 2.0 * (x[1] - centers[i][1]) * e};
  };
  p.component_min = std::vector<double>{0.0, 0.0};
  p.component_min_exact = true;
  p.smoothness = detail::radial_smoothness([](double u) { return std::exp(-u); });
  p.box = detail::square_box(2, 5.0);
  detail::install_finite_solution_set(p, {{0.0, 0.0}, {2.0, 2.0}});
  CertifiedRegion c;
  c.alpha_min = 72e7;
  c.beta_rule = "beta = alpha - 8";
  c.beta_lo = [](double a) { return a - 8.0; };
  c.beta_hi = [](double a) { return a - 8.0; };
  c.beta_hi_inclusive = true;
  c.box = *p.box;
  p.certificate = c;
  return p;
}

/// Two radial ratios; beta = 0 is not admissible.
inline FiniteSumProblem make_example7() {
  auto p = make_ratio_family(2, 2, std::vector<Point>{{0.0, 0.0}, {1.0, 1.0}});
  p.tag = "example7";
  p.box = detail::square_box(2, 5.0);
  detail::install_finite_solution_set(p, {{0.0, 0.0}, {1.0, 1.0}});
  CertifiedRegion c;
  c.alpha_min = 41.369325;
  c.beta_rule = "beta = alpha - 1";
  c.beta_lo = [](double a) { return a - 1.0; };
  c.beta_hi = [](double a) { return a - 1.0; };
  c.beta_hi_inclusive = true;
  c.box = *p.box;
  p.certificate = c;
  return p;
}

/// f_1 = (1 + |x|^2) / (4 + |x|^2) and f_2 = |x - c|^2 / (1 + |x - c|^2), c = (2.5, 2.5).
/// f has a spurious local minimizer near the origin besides the global one.
inline FiniteSumProblem make_example10() {
  FiniteSumProblem p;
  p.tag = "example10";
  p.n = 2;
  p.d = 2;
  const Point center{2.5, 2.5};
  p.value = [center](std::size_t i, const Point& x) {
    if (i == 0) {
      const double u = x[0] * x[0] + x[1] * x[1];
      return (1.0 + u) / (4.0 + u);
    }
    const double v = detail::sq_dist_to(x, center);
    return v / (1.0 + v);
  };
  p.grad = [center](std::size_t i, const Point& x) {
    if (i == 0) {
      const double q = 4.0 + x[0] * x[0] + x[1] * x[1];
      return Point{6.0 * x[0] / (q * q), 6.0 * x[1] / (q * q)};
    }
    const double q = 1.0 + detail::sq_dist_to(x, center);
    return Point{2.0 * (x[0] - center[0]) / (q * q), 2.0 * (x[1] - center[1]) / (q * q)};
  };
  p.component_min = std::vector<double>{0.25, 0.0};
  p.component_min_exact = true;
  p.smoothness = std::max(
      detail::radial_smoothness([](double u) { return 3.0 / ((4.0 + u) * (4.0 + u)); }),
      detail::radial_smoothness([](double u) { return 1.0 / ((1.0 + u) * (1.0 + u)); }));
  p.box = detail::square_box(2, 5.0);
  detail::install_finite_solution_set(p, {{0.0, 0.0}, {2.5, 2.5}});
  CertifiedRegion c;
  c.alpha_min = 1512.4586;
  c.beta_rule = "beta = alpha - 1";
  c.beta_lo = [](double a) { return a - 1.0; };
  c.beta_hi = [](double a) { return a - 1.0; };
  c.beta_hi_inclusive = true;
  c.box = *p.box;
  p.certificate = c;
  return p;
}

/// f_i(x) = 0.5 * ||x - c_i||^2 + offset. Convex, L = 1, S = {mean of centers}.
inline FiniteSumProblem make_quadratic(const std::vector<Point>& centers, double offset = 0.0) {
  require(!centers.empty(), "quadratic: need at least one center");
  const std::size_t d = centers.front().size();
  require(d >= 1, "quadratic: zero dimension");
  for (const auto& c : centers) require(c.size() == d, "quadratic: ragged centers");
  FiniteSumProblem p;
  p.tag = "quadratic";
  p.n = centers.size();
  p.d = d;
  p.value = [centers, offset](std::size_t i, const Point& x) {
    return 0.5 * detail::sq_dist_to(x, centers[i]) + offset;
  };
  p.grad = [centers](std::size_t i, const Point& x) { return sub(x, centers[i]); };
  Point mean(d, 0.0);
  for (const auto& c : centers) axpy(1.0 / static_cast<double>(centers.size()), c, mean);
  p.component_min = std::vector<double>(p.n, offset);
  p.component_min_exact = true;
  p.smoothness = 1.0;
  p.solution_points = {mean};
  p.global_min = full_loss(p, mean);
  p.project = [mean](const Point&) { return mean; };
  p.box = detail::square_box(d, 10.0);
  return p;
}

// ---------------------------------------------------------------------------
// Seeded synthetic instances
// ---------------------------------------------------------------------------

namespace detail {

class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}
  double operator()(double mean = 0.0, double sd = 1.0) {
    return boost::random::normal_distribution<double>(mean, sd)(engine_);
  }

 private:
  boost::random::mt19937_64 engine_;
};

inline DataArray gaussian_array(GaussianSource& src, std::string name, std::size_t rows,
                                std::size_t cols, double mean = 0.0, double sd = 1.0) {
  DataArray a{std::move(name), rows, cols, std::vector<double>(rows * cols)};
  for (auto& v : a.values) v = src(mean, sd);
  return a;
}

}  // namespace detail

/// Packs W (k x n, column i = w_i) and S (k x m) into one point: W column-major
/// followed by S column-major.
inline Point pack_factors(const DataArray& W, const DataArray& S) {
  require(W.rows == S.rows, "pack_factors: rank mismatch");
  const std::size_t k = W.rows;
  Point x(k * (W.cols + S.cols));
  for (std::size_t i = 0; i < W.cols; ++i)
    for (std::size_t r = 0; r < k; ++r) x[i * k + r] = W.at(r, i);
  const std::size_t off = k * W.cols;
  for (std::size_t j = 0; j < S.cols; ++j)
    for (std::size_t r = 0; r < k; ++r) x[off + j * k + r] = S.at(r, j);
  return x;
}

/// f_ij(W, S) = 0.5 * (X_ij - w_i^T s_j)^2 over all n*m entries (component
/// index i*m + j) for a given data matrix X (n x m, row-major).
inline FiniteSumProblem make_matrix_factorization_from(const DataArray& X, std::size_t k) {
  const std::size_t n = X.rows, m = X.cols;
  require(n >= 1 && m >= 1 && k >= 1, "matrix factorization: empty shape");
  require(X.values.size() == n * m, "matrix factorization: X storage does not match shape");
  FiniteSumProblem p;
  p.tag = "matrix_factorization";
  p.n = n * m;
  p.d = k * (n + m);
  auto data = std::make_shared<const std::vector<double>>(X.values);
  auto residual = [data, n, m, k](std::size_t c, const Point& x) {
    const std::size_t i = c / m, j = c % m;
    const double* w = x.data() + i * k;
    const double* s = x.data() + k * n + j * k;
    double ws = 0.0;
    for (std::size_t r = 0; r < k; ++r) ws += w[r] * s[r];
    return ws - (*data)[i * m + j];
  };
  p.value = [residual](std::size_t c, const Point& x) {
    const double e = residual(c, x);
    return 0.5 * e * e;
  };
  p.grad = [residual, n, m, k](std::size_t c, const Point& x) {
    const std::size_t i = c / m, j = c % m;
    const double e = residual(c, x);
    Point g(x.size(), 0.0);
    const std::size_t wo = i * k, so = k * n + j * k;
    for (std::size_t r = 0; r < k; ++r) {
      g[wo + r] = e * x[so + r];
      g[so + r] = e * x[wo + r];
    }
    return g;
  };
  p.component_min = std::vector<double>(p.n, 0.0);
  p.component_min_exact = false;
  p.box = detail::square_box(p.d, 3.0);
  return p;
}

/// X = (W*)^T S* + noise with standard-normal factors and N(0, noise_sd^2) noise.
inline FiniteSumProblem make_matrix_factorization(std::size_t n, std::size_t m, std::size_t k,
                                                  double noise_sd, std::uint64_t seed) {
  require(n >= 1 && m >= 1 && k >= 1, "matrix factorization: empty shape");
  require(k <= std::min(n, m), "matrix factorization: rank exceeds min(n, m)");
  require(noise_sd >= 0.0, "matrix factorization: noise_sd must be nonnegative");
  detail::GaussianSource src(seed);
  auto W = detail::gaussian_array(src, "W_star", k, n);
  auto S = detail::gaussian_array(src, "S_star", k, m);
  auto E = detail::gaussian_array(src, "noise", n, m, 0.0, noise_sd);
  DataArray X{"X", n, m, std::vector<double>(n * m)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double ws = 0.0;
      for (std::size_t r = 0; r < k; ++r) ws += W.at(r, i) * S.at(r, j);
      X.values[i * m + j] = ws + E.at(i, j);
    }
  auto p = make_matrix_factorization_from(X, k);
  auto ds = std::make_shared<GeneratedDataset>();
  ds->family = "matrix_factorization";
  ds->seed = seed;
  ds->arrays = {std::move(X), std::move(W), std::move(S), std::move(E)};
  p.dataset = ds;
  return p;
}

/// f_i(x) = sigmoid(-b_i a_i^T x) + (lambda/2) ||x||^2 with two Gaussian classes
/// centred at +class_mean * 1 (label +1) and -class_mean * 1 (label -1).
inline FiniteSumProblem make_halfspace(std::size_t samples_per_class, std::size_t d,
                                       double lambda, std::uint64_t seed,
                                       double class_mean = 1.0, double class_sd = 2.0) {
  require(samples_per_class >= 1 && d >= 1, "halfspace: empty shape");
  require(lambda >= 0.0, "halfspace: lambda must be nonnegative");
  require(class_sd > 0.0, "halfspace: class_sd must be positive");
  const std::size_t n = 2 * samples_per_class;
  detail::GaussianSource src(seed);
  DataArray A{"A", n, d, std::vector<double>(n * d)};
  DataArray b{"b", n, 1, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double label = i < samples_per_class ? 1.0 : -1.0;
    b.values[i] = label;
    for (std::size_t j = 0; j < d; ++j) A.values[i * d + j] = src(label * class_mean, class_sd);
  }
  auto feats = std::make_shared<const std::vector<double>>(A.values);
  auto labels = std::make_shared<const std::vector<double>>(b.values);

  FiniteSumProblem p;
  p.tag = "halfspace";
  p.n = n;
  p.d = d;
  auto margin = [feats, labels, d](std::size_t i, const Point& x) {
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += (*feats)[i * d + j] * x[j];
    return -(*labels)[i] * t;
  };
  p.value = [margin, lambda](std::size_t i, const Point& x) {
    return detail::sigmoid(margin(i, x)) + 0.5 * lambda * norm_sq(x);
  };
  p.grad = [margin, feats, labels, lambda, d](std::size_t i, const Point& x) {
    const double s = detail::sigmoid(margin(i, x));
    const double coef = -s * (1.0 - s) * (*labels)[i];
    Point g(d);
    for (std::size_t j = 0; j < d; ++j) g[j] = coef * (*feats)[i * d + j] + lambda * x[j];
    return g;
  };
  // |sigmoid''| <= 1/(6 sqrt 3); each Hessian is sigmoid'' a a^T + lambda I.
  double max_a2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double a2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) a2 += A.at(i, j) * A.at(i, j);
    max_a2 = std::max(max_a2, a2);
  }
  p.smoothness = max_a2 / (6.0 * std::sqrt(3.0)) + lambda;
  p.component_min = std::vector<double>(n, 0.0);
  p.component_min_exact = false;
  p.box = detail::square_box(d, 5.0);

  auto ds = std::make_shared<GeneratedDataset>();
  ds->family = "halfspace";
  ds->seed = seed;
  ds->arrays = {std::move(A), std::move(b)};
  p.dataset = ds;
  return p;
}

/// f_i(W, v) = log(1 + exp(-y_i v^T relu(W x_i))) + lambda1 ||v||^2 + lambda2 ||W||_F^2.
/// Features are standard normal, shifted along a planted direction so every
/// sample has margin at least `margin`. The point packs W (k x d, row-major)
/// followed by v.
inline FiniteSumProblem make_two_layer_relu(std::size_t n, std::size_t d, std::size_t k,
                                            double lambda1, double lambda2, std::uint64_t seed,
                                            double margin = 0.5) {
  require(n >= 1 && d >= 1 && k >= 1, "two-layer relu: empty shape");
  require(lambda1 > 0.0 && lambda2 > 0.0, "two-layer relu: regularizers must be positive");
  detail::GaussianSource src(seed);
  DataArray w_star = detail::gaussian_array(src, "w_star", 1, d);
  const double wn = norm(w_star.values);
  for (auto& v : w_star.values) v /= wn;
  DataArray X{"X", n, d, std::vector<double>(n * d)};
  DataArray y{"y", n, 1, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      X.values[i * d + j] = src();
      t += X.values[i * d + j] * w_star.values[j];
    }
    const double label = t >= 0.0 ? 1.0 : -1.0;
    y.values[i] = label;
    for (std::size_t j = 0; j < d; ++j) X.values[i * d + j] += label * margin * w_star.values[j];
  }
  auto feats = std::make_shared<const std::vector<double>>(X.values);
  auto labels = std::make_shared<const std::vector<double>>(y.values);

  FiniteSumProblem p;
  p.tag = "two_layer_relu";
  p.n = n;
  p.d = k * d + k;
  auto forward = [feats, d, k](std::size_t i, const Point& x, std::vector<double>& pre) {
    pre.assign(k, 0.0);
    for (std::size_t r = 0; r < k; ++r) {
      double h = 0.0;
      for (std::size_t j = 0; j < d; ++j) h += x[r * d + j] * (*feats)[i * d + j];
      pre[r] = h;
    }
  };
  auto regularizer = [lambda1, lambda2, d, k](const Point& x) {
    double w2 = 0.0, v2 = 0.0;
    for (std::size_t q = 0; q < k * d; ++q) w2 += x[q] * x[q];
    for (std::size_t r = 0; r < k; ++r) v2 += x[k * d + r] * x[k * d + r];
    return lambda1 * v2 + lambda2 * w2;
  };
  p.value = [forward, regularizer, labels, d, k](std::size_t i, const Point& x) {
    std::vector<double> pre;
    forward(i, x, pre);
    double out = 0.0;
    for (std::size_t r = 0; r < k; ++r) out += x[k * d + r] * std::max(pre[r], 0.0);
    return logistic_loss((*labels)[i] * out) + regularizer(x);
  };
  p.grad = [forward, feats, labels, lambda1, lambda2, d, k](std::size_t i, const Point& x) {
    std::vector<double> pre;
    forward(i, x, pre);
    double out = 0.0;
    for (std::size_t r = 0; r < k; ++r) out += x[k * d + r] * std::max(pre[r], 0.0);
    const double yi = (*labels)[i];
    const double coef = logistic_loss_derivative(yi * out) * yi;
    Point g(x.size());
    for (std::size_t r = 0; r < k; ++r) {
      const double v = x[k * d + r];
      const double active = pre[r] > 0.0 ? 1.0 : 0.0;
      for (std::size_t j = 0; j < d; ++j)
        g[r * d + j] = coef * v * active * (*feats)[i * d + j] + 2.0 * lambda2 * x[r * d + j];
      g[k * d + r] = coef * std::max(pre[r], 0.0) + 2.0 * lambda1 * v;
    }
    return g;
  };
  p.component_min = std::vector<double>(n, 0.0);
  p.component_min_exact = false;
  p.box = detail::square_box(p.d, 1.0);

  auto ds = std::make_shared<GeneratedDataset>();
  ds->family = "two_layer_relu";
  ds->seed = seed;
  ds->arrays = {std::move(X), std::move(y), std::move(w_star)};
  p.dataset = ds;
  return p;
}

/// Pre-activations W x_i of the two-layer network for every sample, flattened
/// (sample-major). Used to keep finite-difference probes away from ReLU kinks.
inline std::vector<double> relu_preactivations(const FiniteSumProblem& p, const Point& x) {
  require(p.tag == "two_layer_relu" && p.dataset, "relu_preactivations: wrong problem");
  const auto& X = p.dataset->array("X");
  const std::size_t d = X.cols, k = p.d / (d + 1);
  std::vector<double> out;
  out.reserve(p.n * k);
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t r = 0; r < k; ++r) {
      double h = 0.0;
      for (std::size_t j = 0; j < d; ++j) h += x[r * d + j] * X.at(i, j);
      out.push_back(h);
    }
  return out;
}

}  // namespace abcond
