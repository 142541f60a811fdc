// Vector arithmetic, the finite-sum problem abstraction, deterministic index
// sampling and finite-difference gradient checking.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace abcond {

using Point = std::vector<double>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// A caller broke a documented precondition (dimension, index, parameter range).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An optimizer iterate became non-finite or exceeded the divergence threshold.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// NGN was asked to take a step on a non-positive component value.
class NgnPositivityError : public std::runtime_error {
 public:
  NgnPositivityError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// A replayed run did not reproduce the stored iterates bit for bit.
class DeterminismError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A convergence theorem was evaluated outside its hypotheses.
class HypothesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

// ---------------------------------------------------------------------------
// Dense vector helpers. Reductions run in ascending index order.
// ---------------------------------------------------------------------------

inline double dot(const Point& a, const Point& b) {
  require(a.size() == b.size(), "dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

inline double norm_sq(const Point& a) { return dot(a, a); }
inline double norm(const Point& a) { return std::sqrt(norm_sq(a)); }

inline Point sub(const Point& a, const Point& b) {
  require(a.size() == b.size(), "sub: dimension mismatch");
  Point r(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) r[j] = a[j] - b[j];
  return r;
}

inline double dist_sq(const Point& a, const Point& b) { return norm_sq(sub(a, b)); }

/// y += s * x
inline void axpy(double s, const Point& x, Point& y) {
  require(x.size() == y.size(), "axpy: dimension mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) y[j] += s * x[j];
}

inline bool all_finite(const Point& a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Problem abstraction
// ---------------------------------------------------------------------------

/// Axis-aligned box used for property checks and certificates.
struct TestBox {
  Point lo;
  Point hi;
};

/// The (alpha, beta) pairs a proof certifies for a built-in problem.
struct CertifiedRegion {
  double alpha_min = 0.0;
  std::string beta_rule;                     // human-readable form of the rule
  std::function<double(double)> beta_lo;     // smallest admissible beta at alpha
  std::function<double(double)> beta_hi;     // admissible beta stays below this
  bool beta_hi_inclusive = false;
  TestBox box;

  bool admits(double alpha, double beta) const {
    if (alpha < alpha_min || beta < 0.0 || beta >= alpha) return false;
    const double hi = beta_hi(alpha);
    return beta >= beta_lo(alpha) && (beta_hi_inclusive ? beta <= hi : beta < hi);
  }
};

/// Raw generator output for synthetic problems. Arrays are row-major.
struct DataArray {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct GeneratedDataset {
  std::string family;
  std::uint64_t seed = 0;
  std::vector<DataArray> arrays;

  const DataArray& array(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw ContractViolation("dataset has no array named " + name);
  }
};

using ComponentValue = std::function<double(std::size_t, const Point&)>;
using ComponentGrad = std::function<Point(std::size_t, const Point&)>;
using Projection = std::function<Point(const Point&)>;

/// f(x) = (1/n) sum_i f_i(x) with per-component oracles and known constants.
struct FiniteSumProblem {
  std::string tag;
  std::size_t n = 0;
  std::size_t d = 0;
  ComponentValue value;
  ComponentGrad grad;

  std::optional<std::vector<double>> component_min;  // f_i^* (or a lower bound)
  bool component_min_exact = false;                   // true when f_i^* is attained
  std::optional<double> global_min;                   // f^*
  std::optional<double> smoothness;                   // L
  Projection project;                                 // onto S; empty if unknown
  std::vector<Point> solution_points;                 // S, when it is finite and located

  std::optional<CertifiedRegion> certificate;
  std::optional<TestBox> box;
  std::shared_ptr<const GeneratedDataset> dataset;

  double component_value(std::size_t i, const Point& x) const {
    check_args(i, x);
    return value(i, x);
  }

  Point component_grad(std::size_t i, const Point& x) const {
    check_args(i, x);
    return grad(i, x);
  }

  double component_lower_bound(std::size_t i) const {
    return component_min ? (*component_min)[i] : 0.0;
  }

  bool has_projection() const { return static_cast<bool>(project); }

 private:
  void check_args(std::size_t i, const Point& x) const {
    require(i < n, "component index out of range");
    require(x.size() == d, "point dimension does not match problem dimension");
  }
};

inline double full_loss(const FiniteSumProblem& problem, const Point& x) {
  require(x.size() == problem.d, "full_loss: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < problem.n; ++i) s += problem.value(i, x);
  return s / static_cast<double>(problem.n);
}

inline Point full_grad(const FiniteSumProblem& problem, const Point& x) {
  require(x.size() == problem.d, "full_grad: dimension mismatch");
  Point g(problem.d, 0.0);
  for (std::size_t i = 0; i < problem.n; ++i) {
    const Point gi = problem.grad(i, x);
    for (std::size_t j = 0; j < problem.d; ++j) g[j] += gi[j];
  }
  const double count = static_cast<double>(problem.n);
  for (auto& v : g) v /= count;
  return g;
}

/// Max over coordinates of the relative error between the analytic component
/// gradient and central differences. Absolute error is used where the analytic
/// entry is below 1e-8 in magnitude.
inline double grad_check(const FiniteSumProblem& problem, std::size_t i, const Point& x,
                         double h = 1e-6) {
  require(h > 0.0, "grad_check: step must be positive");
  const Point analytic = problem.component_grad(i, x);
  Point probe = x;
  double worst = 0.0;
  for (std::size_t j = 0; j < problem.d; ++j) {
    probe[j] = x[j] + h;
    const double up = problem.value(i, probe);
    probe[j] = x[j] - h;
    const double down = problem.value(i, probe);
    probe[j] = x[j];
    const double fd = (up - down) / (2.0 * h);
    const double abs_err = std::abs(analytic[j] - fd);
    const double err =
        std::abs(analytic[j]) < 1e-8 ? abs_err : abs_err / std::abs(analytic[j]);
    worst = std::max(worst, err);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Deterministic sampling
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based index generator. Draw number c of seed s is
///   h = mix64(s + (c + 1) * 0x9E3779B97F4A7C15),  index = floor(h * n / 2^64),
/// i.e. the SplitMix64 stream followed by a multiply-shift range reduction.
/// The sequence depends only on (seed, counter).
class SeededSampler {
 public:
  static constexpr const char* kAlgorithm = "splitmix64-counter/multiply-shift";

  SeededSampler(std::uint64_t seed, std::size_t n) : seed_(seed), n_(n) {
    require(n >= 1, "sampler range must be nonempty");
  }

  std::size_t next() {
    const std::uint64_t h = mix64(seed_ + (counter_ + 1) * 0x9E3779B97F4A7C15ULL);
    ++counter_;
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(h) * static_cast<unsigned __int128>(n_)) >> 64);
  }

  void reset() { counter_ = 0; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  std::size_t range() const { return n_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::size_t n_;
};

inline std::size_t sample_index(SeededSampler& sampler) { return sampler.next(); }

// ---------------------------------------------------------------------------
// Work splitting. Each index is processed exactly once; results must be
// written to index-addressed storage so output does not depend on jobs.
// ---------------------------------------------------------------------------

template <typename F>
void parallel_for(std::size_t count, unsigned jobs, F&& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(jobs, count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace abcond
