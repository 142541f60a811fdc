// Replay of recorded runs, per-step condition quantities, (alpha, beta)
// feasibility grids, and the aiming-angle / PL competitor diagnostics.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <fmt/format.h>

#include "abcond/core.hpp"
#include "abcond/optimizers.hpp"

namespace abcond {

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

namespace detail {

inline bool bit_equal(const Point& a, const Point& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (std::memcmp(&a[j], &b[j], sizeof(double)) != 0) return false;
  return true;
}

inline bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace detail

/// Re-executes a trajectory from (x0, seed) and calls visit(k, x^k, record)
/// for every step. Any stored iterate, sampled index or stepsize that the
/// recomputation does not reproduce bit for bit raises DeterminismError, as
/// does a differing final iterate.
inline void replay(const FiniteSumProblem& problem, const Trajectory& trajectory,
                   const std::function<void(std::size_t, const Point&, const StepRecord&)>& visit) {
  require(trajectory.problem_tag == problem.tag, "replay: trajectory was recorded on another problem");
  Stepper stepper(problem, trajectory.rule, trajectory.x0, trajectory.seed, trajectory.batch);
  for (const auto& stored : trajectory.steps) {
    const std::size_t k = stored.k;
    if (stored.x && !detail::bit_equal(*stored.x, stepper.x()))
      throw DeterminismError(fmt::format("replay: iterate {} differs from the recorded run", k));
    const Point xk = stepper.x();
    const StepRecord rec = stepper.step();
    if (rec.i_k != stored.i_k || !detail::bit_equal(rec.gamma_k, stored.gamma_k))
      throw DeterminismError(fmt::format("replay: step {} sampled or stepped differently", k));
    visit(k, xk, stored);
  }
  if (!detail::bit_equal(stepper.x(), trajectory.x_final))
    throw DeterminismError("replay: final iterate differs from the recorded run");
}

/// All iterates x^0..x^K of a trajectory, recomputed by replay.
inline std::vector<Point> replay_iterates(const FiniteSumProblem& problem, const Trajectory& t) {
  std::vector<Point> xs;
  xs.reserve(t.K() + 1);
  replay(problem, t, [&](std::size_t, const Point& x, const StepRecord&) { xs.push_back(x); });
  xs.push_back(t.x_final);
  return xs;
}

// ---------------------------------------------------------------------------
// Condition records
// ---------------------------------------------------------------------------

struct ConditionRecord {
  std::size_t k = 0;
  std::size_t i_k = 0;
  double inner = 0.0;         // <grad f_i(x^k), x^k - x_p>
  double loss_at_x = 0.0;     // f_i(x^k)
  double loss_at_proj = 0.0;  // f_i(x_p)
  double loss_min = 0.0;      // f_i^*
  double dist_to_proj = 0.0;  // ||x^k - x_p||
};

enum class ProjectionMode { Proxy, Exact };

struct ReplayOptions {
  ProjectionMode mode = ProjectionMode::Proxy;
  double degenerate_tol = 1e-10;  // proxy mode: skip x^k this close to x^K
  double tail_fraction = 0.0;     // drop this fraction of the final steps
};

struct ConditionReplay {
  std::vector<ConditionRecord> records;
  std::size_t excluded_degenerate = 0;
  std::size_t excluded_tail = 0;
};

/// The record for component i at x against the reference point xp.
inline ConditionRecord condition_record(const FiniteSumProblem& problem, std::size_t i,
                                        const Point& x, const Point& xp, double loss_min) {
  const Point diff = sub(x, xp);
  ConditionRecord rec;
  rec.i_k = i;
  rec.inner = dot(problem.component_grad(i, x), diff);
  rec.loss_at_x = problem.value(i, x);
  rec.loss_at_proj = problem.value(i, xp);
  rec.loss_min = loss_min;
  rec.dist_to_proj = norm(diff);
  return rec;
}

/// One record per replayed step. Proxy mode uses x_p = x^K and f_i^* = 0;
/// exact mode uses the problem's projection and component minima.
inline ConditionReplay replay_condition_records(const FiniteSumProblem& problem,
                                                const Trajectory& trajectory,
                                                const ReplayOptions& options = {}) {
  require(options.tail_fraction >= 0.0 && options.tail_fraction < 1.0,
          "tail_fraction must lie in [0, 1)");
  const bool exact = options.mode == ProjectionMode::Exact;
  if (exact) require(problem.has_projection(), "exact mode needs a problem with a projection");
  const std::size_t K = trajectory.K();
  const auto keep = static_cast<std::size_t>(
      std::ceil(static_cast<double>(K) * (1.0 - options.tail_fraction)));

  ConditionReplay out;
  replay(problem, trajectory, [&](std::size_t k, const Point& x, const StepRecord& step) {
    if (k >= keep) {
      ++out.excluded_tail;
      return;
    }
    const Point xp = exact ? problem.project(x) : trajectory.x_final;
    if (!exact && std::sqrt(dist_sq(x, xp)) <= options.degenerate_tol) {
      ++out.excluded_degenerate;
      return;
    }
    ConditionRecord rec = condition_record(problem, step.i_k, x, xp,
                                           exact ? problem.component_lower_bound(step.i_k) : 0.0);
    rec.k = k;
    out.records.push_back(rec);
  });
  return out;
}

// ---------------------------------------------------------------------------
// The T statistic and feasibility grids
// ---------------------------------------------------------------------------

/// Definition: T = inner - alpha (f_i(x) - f_i(x_p)) + beta (f_i(x) - f_i^*).
/// Caption:    T = inner - alpha (f_i(x) - f_i(x_p)) - beta f_i(x).
enum class TSign { Definition, Caption };

/// T = t0 - alpha * a + beta * b.
struct AffineT {
  double t0 = 0.0;
  double a = 0.0;
  double b = 0.0;
};

inline AffineT affine_t(const ConditionRecord& rec, TSign sign = TSign::Definition) {
  AffineT f;
  f.t0 = rec.inner;
  f.a = rec.loss_at_x - rec.loss_at_proj;
  f.b = sign == TSign::Definition ? rec.loss_at_x - rec.loss_min : -rec.loss_at_x;
  return f;
}

inline double eval_affine(const AffineT& f, double alpha, double beta) {
  return f.t0 - alpha * f.a + beta * f.b;
}

inline double t_value(const ConditionRecord& rec, double alpha, double beta,
                      TSign sign = TSign::Definition) {
  require(alpha > beta && beta >= 0.0, "t_value: needs alpha > beta >= 0");
  return eval_affine(affine_t(rec, sign), alpha, beta);
}

struct FeasibilityGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<double> min_t;   // alpha-major: index a * betas.size() + b
  std::vector<char> valid;     // alpha >= beta + margin
  std::vector<char> feasible;  // valid and min_t >= -tolerance
  double margin = 0.1;
  double tolerance = 1e-9;
  std::size_t record_count = 0;

  std::size_t index(std::size_t a, std::size_t b) const { return a * betas.size() + b; }
  double min_t_at(std::size_t a, std::size_t b) const { return min_t[index(a, b)]; }
  bool feasible_at(std::size_t a, std::size_t b) const { return feasible[index(a, b)] != 0; }
  bool valid_at(std::size_t a, std::size_t b) const { return valid[index(a, b)] != 0; }
  std::size_t feasible_count() const {
    return static_cast<std::size_t>(std::count(feasible.begin(), feasible.end(), 1));
  }
};

struct GridOptions {
  double margin = 0.1;
  double tolerance = 1e-9;
  TSign sign = TSign::Definition;
  unsigned jobs = 1;
};

/// n points log-spaced over [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  require(lo > 0.0 && hi >= lo && n >= 1, "log_grid: needs 0 < lo <= hi and n >= 1");
  std::vector<double> g(n);
  if (n == 1) {
    g[0] = lo;
    return g;
  }
  const double l0 = std::log(lo), l1 = std::log(hi);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(n - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

namespace detail {

/// Lower envelope of lines y = c_j + s_j beta, for queries at ascending beta.
/// Lines arrive sorted by slope descending with duplicates removed.
class LowerEnvelope {
 public:
  void reset() { hull_.clear(); }

  void add(double slope, double intercept) {
    while (hull_.size() >= 2 && redundant(hull_[hull_.size() - 2], hull_.back(), {slope, intercept}))
      hull_.pop_back();
    hull_.push_back({slope, intercept});
  }

  /// Minimum over the envelope at non-decreasing beta, advancing a cursor.
  double query(double beta) {
    auto at = [beta](const Line& l) { return l.intercept + beta * l.slope; };
    while (cursor_ + 1 < hull_.size() && at(hull_[cursor_ + 1]) <= at(hull_[cursor_])) ++cursor_;
    return at(hull_[cursor_]);
  }

  void rewind() { cursor_ = 0; }

 private:
  struct Line {
    double slope;
    double intercept;
  };

  // l2 never attains the minimum when l1 and l3 cross at or below it.
  static bool redundant(const Line& l1, const Line& l2, const Line& l3) {
    return (l3.intercept - l1.intercept) * (l1.slope - l2.slope) <=
           (l2.intercept - l1.intercept) * (l1.slope - l3.slope);
  }

  std::vector<Line> hull_;
  std::size_t cursor_ = 0;
};

}  // namespace detail

/// min over records of T at every (alpha, beta) cell. For fixed alpha each
/// record is a line in beta, so each row is a lower-envelope sweep. The value
/// at a cell is the exact affine evaluation of the record the sweep selects,
/// also checked against the neighbouring envelope line.
inline FeasibilityGrid feasibility_grid(const std::vector<ConditionRecord>& records,
                                        const std::vector<double>& alphas,
                                        const std::vector<double>& betas,
                                        const GridOptions& options = {}) {
  require(!alphas.empty() && !betas.empty(), "feasibility_grid: empty alpha or beta grid");
  require(std::is_sorted(alphas.begin(), alphas.end()) && std::is_sorted(betas.begin(), betas.end()),
          "feasibility_grid: grids must be ascending");
  FeasibilityGrid g;
  g.alphas = alphas;
  g.betas = betas;
  g.margin = options.margin;
  g.tolerance = options.tolerance;
  g.record_count = records.size();
  const std::size_t NA = alphas.size(), NB = betas.size();
  g.min_t.assign(NA * NB, std::numeric_limits<double>::infinity());
  g.valid.assign(NA * NB, 0);
  g.feasible.assign(NA * NB, 0);

  std::vector<AffineT> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(affine_t(r, options.sign));
  // Slope descending; within a slope, smallest intercept first requires the
  // row's alpha, so ties are resolved per row.
  std::vector<std::size_t> order(lines.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (lines[x].b != lines[y].b) return lines[x].b > lines[y].b;
    return x < y;
  });

  parallel_for(NA, options.jobs, [&](std::size_t ai) {
    const double alpha = alphas[ai];
    if (!lines.empty()) {
      detail::LowerEnvelope env;
      std::size_t pos = 0;
      while (pos < order.size()) {
        const double slope = lines[order[pos]].b;
        double best = std::numeric_limits<double>::infinity();
        for (; pos < order.size() && lines[order[pos]].b == slope; ++pos) {
          const auto& l = lines[order[pos]];
          best = std::min(best, l.t0 - alpha * l.a);
        }
        env.add(slope, best);
      }
      for (std::size_t bi = 0; bi < NB; ++bi) g.min_t[g.index(ai, bi)] = env.query(betas[bi]);
    }
    for (std::size_t bi = 0; bi < NB; ++bi) {
      const std::size_t c = g.index(ai, bi);
      const bool ok = alpha >= betas[bi] + options.margin;
      g.valid[c] = ok;
      g.feasible[c] = ok && g.min_t[c] >= -options.tolerance;
    }
  });
  return g;
}

/// Reference minimum over records at one cell by direct evaluation.
inline double brute_force_min_t(const std::vector<ConditionRecord>& records, double alpha,
                                double beta, TSign sign = TSign::Definition) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : records) m = std::min(m, eval_affine(affine_t(r, sign), alpha, beta));
  return m;
}

// ---------------------------------------------------------------------------
// Aiming and PL diagnostics
// ---------------------------------------------------------------------------

struct AngleResult {
  double angle = std::numeric_limits<double>::quiet_NaN();  // radians
  double inner = 0.0;
  bool flagged = true;  // a zero vector was supplied
};

namespace detail {

/// v / max|v_j|, so tiny vectors keep their direction when squared.
inline Point rescaled(const Point& v, double& scale) {
  scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  Point out(v);
  if (scale > 0.0)
    for (auto& x : out) x /= scale;
  return out;
}

}  // namespace detail

inline AngleResult aiming_angle(const Point& full_gradient, const Point& direction) {
  AngleResult r;
  r.inner = dot(full_gradient, direction);
  double gs = 0.0, ds = 0.0;
  const Point g = detail::rescaled(full_gradient, gs), d = detail::rescaled(direction, ds);
  const double gn = gs * norm(g), dn = ds * norm(d);
  if (!(gn > 1e-300) || !(dn > 1e-300)) return r;
  r.flagged = false;
  r.angle = std::acos(std::clamp(dot(g, d) / (norm(g) * norm(d)), -1.0, 1.0));
  return r;
}

struct PLRecord {
  std::size_t k = 0;
  double delta = 2.0;
  double log_lhs = std::numeric_limits<double>::quiet_NaN();
  bool flagged = true;
};

/// 2 ln ||grad f|| - (2 / delta) ln(f - f_ref), natural log. Flagged (log_lhs
/// NaN) unless ||grad f|| > 0, f > f_ref and all inputs are finite.
inline PLRecord pl_log_constant(double full_loss_value, double f_ref, double grad_norm,
                                double delta) {
  require(delta >= 1.0 && delta <= 2.0, "pl_log_constant: delta must lie in [1, 2]");
  PLRecord r;
  r.delta = delta;
  const double gap = full_loss_value - f_ref;
  if (!std::isfinite(full_loss_value) || !std::isfinite(f_ref) || !std::isfinite(grad_norm) ||
      !(grad_norm > 0.0) || !(gap > 0.0))
    return r;
  r.log_lhs = 2.0 * std::log(grad_norm) - (2.0 / delta) * std::log(gap);
  r.flagged = false;
  return r;
}

/// Largest mu admitted by a set of PL records: inf exp(log_lhs) / 2 over
/// unflagged records (+inf if there are none).
inline double pl_mu(const std::vector<PLRecord>& records) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : records)
    if (!r.flagged) m = std::min(m, std::exp(r.log_lhs) / 2.0);
  return m;
}

/// sigma_int^2 = mean_i (f^* - f_i^*) from the problem's known constants.
inline double empirical_sigma_int(const FiniteSumProblem& problem) {
  require(problem.global_min.has_value() && problem.component_min.has_value(),
          "analytic sigma_int needs global and component minima");
  double s = 0.0;
  for (std::size_t i = 0; i < problem.n; ++i) s += *problem.global_min - (*problem.component_min)[i];
  return s / static_cast<double>(problem.n);
}

/// Same quantity with f^* estimated by the lowest full loss observed in the
/// runs (recorded values and final iterates); f_i^* falls back to 0.
inline double empirical_sigma_int(const FiniteSumProblem& problem,
                                  const std::vector<Trajectory>& runs) {
  require(!runs.empty(), "empirical_sigma_int: no runs supplied");
  double fstar = std::numeric_limits<double>::infinity();
  for (const auto& t : runs) {
    fstar = std::min(fstar, full_loss(problem, t.x_final));
    for (const auto& s : t.steps)
      if (s.full_loss) fstar = std::min(fstar, *s.full_loss);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < problem.n; ++i) s += fstar - problem.component_lower_bound(i);
  return s / static_cast<double>(problem.n);
}

struct DiagnosticStep {
  std::size_t k = 0;
  double full_loss = 0.0;
  double grad_norm = 0.0;
  AngleResult angle;  // between grad f(x^k) and x^k - x^K
};

struct Diagnosis {
  std::vector<DiagnosticStep> steps;
  std::vector<PLRecord> pl;  // step-major, one entry per delta
  double f_ref = 0.0;
  double final_loss = 0.0;
};

inline const std::vector<double>& default_pl_deltas() {
  static const std::vector<double> deltas{1.0, 1.25, 1.5, 1.75, 2.0};
  return deltas;
}

/// Aiming angles against x^K and PL log-constants along a replayed run.
/// f_ref defaults to the problem's f^* when known, else f(x^K).
inline Diagnosis diagnose(const FiniteSumProblem& problem, const Trajectory& trajectory,
                          const std::vector<double>& deltas = default_pl_deltas(),
                          std::optional<double> f_ref = std::nullopt) {
  Diagnosis out;
  out.final_loss = full_loss(problem, trajectory.x_final);
  out.f_ref = f_ref ? *f_ref : problem.global_min.value_or(out.final_loss);
  out.steps.reserve(trajectory.K());
  replay(problem, trajectory, [&](std::size_t k, const Point& x, const StepRecord&) {
    DiagnosticStep s;
    s.k = k;
    s.full_loss = full_loss(problem, x);
    const Point g = full_grad(problem, x);
    s.grad_norm = norm(g);
    s.angle = aiming_angle(g, sub(x, trajectory.x_final));
    for (double d : deltas) {
      PLRecord r = pl_log_constant(s.full_loss, out.f_ref, s.grad_norm, d);
      r.k = k;
      out.pl.push_back(r);
    }
    out.steps.push_back(s);
  });
  return out;
}

}  // namespace abcond
