// The batch commands behind the abcond CLI: run, check-condition, diagnose,
// bounds and reproduce. Each returns a process exit code.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "abcond/config.hpp"
#include "abcond/diagnostics.hpp"
#include "abcond/heatmap.hpp"
#include "abcond/io.hpp"
#include "abcond/optimizers.hpp"
#include "abcond/problems.hpp"
#include "abcond/theory.hpp"

namespace abcond {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitBoundViolation = 1,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitDeterminism = 4,
  kExitHypothesis = 5,
};

struct CommandOptions {
  std::optional<fs::path> out;  // overrides [output] dir
  bool caption_sign = false;
  bool no_svg = false;
  bool svg_timestamp = false;
  unsigned jobs = 1;
  std::ostream* log = &std::cout;
  std::ostream* err = &std::cerr;
};

namespace detail {

struct Session {
  ExperimentConfig config;
  FiniteSumProblem problem;
  fs::path out;
  const CommandOptions& opts;

  Session(ExperimentConfig c, const CommandOptions& o)
      : config(std::move(c)), problem(build_problem(config)), opts(o) {
    out = o.out ? *o.out : fs::path(config.out_dir);
    if (o.caption_sign) config.sign = TSign::Caption;
  }

  std::ostream& log() const { return *opts.log; }
  std::ostream& err() const { return *opts.err; }

  fs::path seed_dir(std::uint64_t seed) const { return out / fmt::format("seed-{}", seed); }

  /// One trajectory per configured seed, index-aligned with config.seeds.
  std::vector<Trajectory> run_all(std::size_t K, std::size_t full_loss_every) const {
    const StepsizeRule rule = resolve_rule(config, problem);
    std::vector<Trajectory> runs(config.seeds.size());
    RunOptions ro;
    ro.record_full_loss_every = full_loss_every;
    ro.batch = config.batch;
    parallel_for(runs.size(), opts.jobs, [&](std::size_t s) {
      const auto seed = config.seeds[s];
      runs[s] = run(problem, rule, resolve_x0(config, problem, seed), K, seed, ro);
    });
    return runs;
  }

  std::vector<Trajectory> run_all() const { return run_all(config.K, config.record_full_loss_every); }

  void write_trajectories(const std::vector<Trajectory>& runs) const {
    for (const auto& t : runs) {
      auto csv = open_output(seed_dir(t.seed) / "trajectory.csv");
      write_trajectory_csv(csv, t);
      auto meta = open_output(seed_dir(t.seed) / "trajectory.meta");
      write_trajectory_meta(meta, t);
    }
    if (problem.dataset) {
      auto ds = open_output(out / "dataset.csv");
      write_dataset_csv(ds, *problem.dataset);
    }
  }

  /// dist(x, S)^2 through the problem's projection, or to `fallback`.
  double dist_sq_to_solution(const Point& x, const Point& fallback) const {
    return problem.has_projection() ? dist_sq(x, problem.project(x)) : dist_sq(x, fallback);
  }
};

inline const char* sign_name(TSign s) { return s == TSign::Definition ? "definition" : "caption"; }

}  // namespace detail

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

inline int cmd_run(const ExperimentConfig& config, const CommandOptions& opts) {
  detail::Session s(config, opts);
  const auto runs = s.run_all();
  s.write_trajectories(runs);
  for (const auto& t : runs) {
    const double f0 = full_loss(s.problem, t.x0), fK = full_loss(s.problem, t.x_final);
    fmt::print(s.log(), "seed {}: {} steps, f(x0) = {:.6g}, f(xK) = {:.6g}", t.seed, t.K(), f0, fK);
    if (s.problem.has_projection())
      fmt::print(s.log(), ", dist(x0,S) = {:.6g}, dist(xK,S) = {:.6g}",
                 std::sqrt(dist_sq(t.x0, s.problem.project(t.x0))),
                 std::sqrt(dist_sq(t.x_final, s.problem.project(t.x_final))));
    s.log() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// check-condition
// ---------------------------------------------------------------------------

struct ConditionSummary {
  FeasibilityGrid grid;
  std::vector<ConditionRecord> pooled;  // runs concatenated in seed order
  std::vector<ConditionReplay> per_run;
  std::size_t excluded_degenerate = 0;
  std::size_t excluded_tail = 0;
};

inline ConditionSummary check_condition_records(const FiniteSumProblem& problem,
                                                const std::vector<Trajectory>& runs,
                                                const ExperimentConfig& config, unsigned jobs) {
  std::vector<ConditionReplay> per(runs.size());
  ReplayOptions ro;
  ro.mode = config.projection;
  ro.tail_fraction = config.tail_fraction;
  parallel_for(runs.size(), jobs, [&](std::size_t i) { per[i] = replay_condition_records(problem, runs[i], ro); });
  ConditionSummary out;
  out.per_run = per;
  for (const auto& p : per) {
    out.pooled.insert(out.pooled.end(), p.records.begin(), p.records.end());
    out.excluded_degenerate += p.excluded_degenerate;
    out.excluded_tail += p.excluded_tail;
  }
  GridOptions go;
  go.margin = config.margin;
  go.tolerance = config.tolerance;
  go.sign = config.sign;
  go.jobs = jobs;
  out.grid = feasibility_grid(out.pooled, alpha_grid(config), beta_grid(config), go);
  return out;
}

inline int cmd_check_condition(const ExperimentConfig& config, const CommandOptions& opts) {
  detail::Session s(config, opts);
  const auto betas = beta_grid(s.config);
  require(!betas.empty(), "check-condition: beta grid is empty");
  const auto runs = s.run_all();
  s.write_trajectories(runs);
  const auto summary = check_condition_records(s.problem, runs, s.config, opts.jobs);

  {
    auto out = open_output(s.out / "condition.csv");
    out << kConditionHeader << '\n';
    for (std::size_t i = 0; i < runs.size(); ++i)
      write_condition_rows(out, runs[i].seed, summary.per_run[i].records);
  }
  {
    auto out = open_output(s.out / "grid.csv");
    write_grid_csv(out, summary.grid);
  }
  if (!opts.no_svg) {
    auto out = open_output(s.out / "heatmap.svg");
    HeatmapOptions ho;
    ho.title = fmt::format("{}: min T over {} records ({} sign, {} projection)", s.problem.tag,
                           summary.pooled.size(), detail::sign_name(s.config.sign),
                           s.config.projection == ProjectionMode::Exact ? "exact" : "proxy");
    ho.timestamp = opts.svg_timestamp;
    write_heatmap_svg(out, summary.grid, ho);
  }

  const auto& g = summary.grid;
  fmt::print(s.log(), "records: {} (excluded: {} degenerate, {} tail)\n", summary.pooled.size(),
             summary.excluded_degenerate, summary.excluded_tail);
  fmt::print(s.log(), "feasible cells: {} of {}\n", g.feasible_count(), g.feasible.size());
  double best_alpha = std::numeric_limits<double>::infinity(), best_beta = 0.0;
  for (std::size_t a = 0; a < g.alphas.size() && std::isinf(best_alpha); ++a)
    for (std::size_t b = 0; b < g.betas.size(); ++b)
      if (g.feasible_at(a, b)) {
        best_alpha = g.alphas[a];
        best_beta = g.betas[b];
        break;
      }
  if (std::isfinite(best_alpha))
    fmt::print(s.log(), "smallest feasible alpha: {:.6g} (with beta = {:.6g})\n", best_alpha, best_beta);
  if (!g.betas.empty() && g.betas.front() == 0.0) {
    bool any = false;
    for (std::size_t a = 0; a < g.alphas.size(); ++a) any = any || g.feasible_at(a, 0);
    fmt::print(s.log(), "beta = 0 column: {}\n", any ? "feasible somewhere" : "infeasible for every alpha");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

struct DiagnoseSummary {
  std::uint64_t seed = 0;
  std::size_t negative_inner = 0;      // aiming violations
  std::size_t flat_high_loss = 0;      // ||grad f|| < 1e-3 while f - f(x^K) > 0.1
  std::vector<std::pair<double, double>> mu;  // (delta, admissible mu)
  double min_log_lhs = std::numeric_limits<double>::infinity();
};

inline DiagnoseSummary summarize_diagnosis(std::uint64_t seed, const Diagnosis& d,
                                           const std::vector<double>& deltas) {
  DiagnoseSummary s;
  s.seed = seed;
  for (const auto& st : d.steps) {
    if (!st.angle.flagged && st.angle.inner < 0.0) ++s.negative_inner;
    if (st.grad_norm < 1e-3 && st.full_loss - d.final_loss > 0.1) ++s.flat_high_loss;
  }
  for (double delta : deltas) {
    std::vector<PLRecord> sel;
    for (const auto& r : d.pl)
      if (r.delta == delta) sel.push_back(r);
    s.mu.emplace_back(delta, pl_mu(sel));
  }
  for (const auto& r : d.pl)
    if (!r.flagged) s.min_log_lhs = std::min(s.min_log_lhs, r.log_lhs);
  return s;
}

inline int cmd_diagnose(const ExperimentConfig& config, const CommandOptions& opts) {
  detail::Session s(config, opts);
  const auto runs = s.run_all();
  s.write_trajectories(runs);
  const auto& deltas = default_pl_deltas();
  std::vector<Diagnosis> diag(runs.size());
  parallel_for(runs.size(), opts.jobs, [&](std::size_t i) { diag[i] = diagnose(s.problem, runs[i], deltas); });
  for (std::size_t i = 0; i < runs.size(); ++i) {
    {
      auto out = open_output(s.seed_dir(runs[i].seed) / "angle.csv");
      write_angle_csv(out, diag[i].steps);
    }
    {
      auto out = open_output(s.seed_dir(runs[i].seed) / "pl.csv");
      write_pl_csv(out, diag[i].pl);
    }
    const auto sum = summarize_diagnosis(runs[i].seed, diag[i], deltas);
    fmt::print(s.log(), "seed {}: aiming violations {}, flat high-loss steps {}, min PL log-constant {:.6g}\n",
               sum.seed, sum.negative_inner, sum.flat_high_loss, sum.min_log_lhs);
    for (const auto& [delta, mu] : sum.mu) fmt::print(s.log(), "  delta {:.2f}: mu <= {:.6g}\n", delta, mu);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

struct BoundCheck {
  BoundRow row;
  double empirical = 0.0;  // seed mean of min_{k<K} (f(x^k) - f^*)
  bool violated = false;
};

struct BoundsReport {
  std::vector<BoundCheck> checks;
  std::vector<std::string> warnings;
  ProblemConstants constants;

  bool any_violation() const {
    for (const auto& c : checks)
      if (c.violated) return true;
    return false;
  }
};

/// Runs every seed for max(K) steps, then compares the seed mean of the best
/// suboptimality so far against the rule's bound at each K.
inline BoundsReport compute_bounds(const FiniteSumProblem& problem, const ExperimentConfig& config,
                                   unsigned jobs) {
  require(config.alpha && config.beta, "bounds: [theory] alpha and beta are required");
  std::vector<std::size_t> Ks = config.bound_Ks.empty() ? std::vector<std::size_t>{config.K} : config.bound_Ks;
  std::sort(Ks.begin(), Ks.end());
  require(Ks.front() >= 1, "bounds: K values must be positive");
  const std::size_t Kmax = Ks.back();
  const StepsizeRule rule = resolve_rule(config, problem);

  std::vector<Trajectory> runs(config.seeds.size());
  RunOptions ro;
  ro.record_full_loss_every = 1;
  ro.batch = config.batch;
  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    const auto seed = config.seeds[i];
    runs[i] = run(problem, rule, resolve_x0(config, problem, seed), Kmax, seed, ro);
  });

  BoundsReport rep;
  ProblemConstants& c = rep.constants;
  c.alpha = *config.alpha;
  c.beta = *config.beta;
  const auto L = config.L ? config.L : problem.smoothness;
  require(L.has_value(), "bounds: no smoothness constant (set [theory] L)");
  c.L = *L;

  double fstar = problem.global_min.value_or(std::numeric_limits<double>::infinity());
  if (!problem.global_min)
    for (const auto& t : runs) {
      fstar = std::min(fstar, full_loss(problem, t.x_final));
      for (const auto& st : t.steps) fstar = std::min(fstar, *st.full_loss);
    }

  std::optional<double> analytic_sigma;
  if (problem.global_min && problem.component_min) analytic_sigma = empirical_sigma_int(problem);
  if (config.sigma_int_sq) {
    c.sigma_int_sq = *config.sigma_int_sq;
    if (analytic_sigma && std::abs(*analytic_sigma - c.sigma_int_sq) > 1e-12)
      rep.warnings.push_back(fmt::format(
          "sigma_int^2 override {:.6g} differs from the problem's value {:.6g}: the constant term of the "
          "bound does not describe this problem",
          c.sigma_int_sq, *analytic_sigma));
  } else {
    c.sigma_int_sq = analytic_sigma ? *analytic_sigma : empirical_sigma_int(problem, runs);
  }
  if (config.sigma_pos_sq) {
    c.sigma_pos_sq = *config.sigma_pos_sq;
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < problem.n; ++i) s += problem.component_lower_bound(i);
    c.sigma_pos_sq = s / static_cast<double>(problem.n);
  }
  double d0 = 0.0;
  for (const auto& t : runs)
    d0 += problem.has_projection() ? dist_sq(t.x0, problem.project(t.x0)) : dist_sq(t.x0, t.x_final);
  c.dist0_sq = d0 / static_cast<double>(runs.size());

  // Best-so-far suboptimality, seed mean, at each K.
  std::vector<double> empirical(Ks.size(), 0.0);
  for (const auto& t : runs) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t next = 0;
    for (std::size_t k = 0; k < t.K() && next < Ks.size(); ++k) {
      best = std::min(best, *t.steps[k].full_loss - fstar);
      while (next < Ks.size() && Ks[next] == k + 1) empirical[next++] += best;
    }
  }
  for (auto& e : empirical) e /= static_cast<double>(runs.size());

  // Run-derived quantities some bounds need.
  double G_sq = 0.0, D_sq_grad = 0.0, D_sq_iter = 0.0;
  for (const auto& t : runs) {
    for (const auto& st : t.steps) G_sq = std::max(G_sq, st.grad_norm_sq);
    for (std::size_t i = 0; i < problem.n; ++i) D_sq_grad = std::max(D_sq_grad, norm_sq(problem.grad(i, t.x0)));
  }
  if (std::holds_alternative<DecSps>(rule))
    for (const auto& t : runs)
      for (const auto& x : replay_iterates(problem, t))
        D_sq_iter = std::max(D_sq_iter, problem.has_projection() ? dist_sq(x, problem.project(x))
                                                                 : dist_sq(x, t.x_final));

  for (std::size_t j = 0; j < Ks.size(); ++j) {
    ProblemConstants ck = c;
    ck.K = Ks[j];
    BoundCheck chk;
    chk.row.method = rule_name(rule);
    chk.row.K = Ks[j];
    chk.empirical = empirical[j];
    if (const auto* r = std::get_if<SgdConstant>(&rule)) {
      chk.row.gamma = r->gamma;
      chk.row.bound = sgd_bound(ck, r->gamma);
    } else if (const auto* r = std::get_if<SgdDecreasing>(&rule)) {
      chk.row.gamma = r->gamma0;
      chk.row.bound = sgd_decreasing_bound(ck, r->gamma0);
    } else if (const auto* r = std::get_if<SpsMax>(&rule)) {
      chk.row.gamma = r->gamma_b;
      chk.row.bound = sps_bound(ck, r->c, r->gamma_b);
    } else if (const auto* r = std::get_if<DecSps>(&rule)) {
      chk.row.gamma = r->gamma_b;
      chk.row.bound = decsps_bound(ck, r->c0, r->gamma_b, D_sq_iter);
    } else if (const auto* r = std::get_if<Ngn>(&rule)) {
      chk.row.gamma = r->gamma;
      chk.row.bound = ngn_bound(ck, r->gamma, config.ngn_third_denominator);
    } else if (const auto* r = std::get_if<NgnDecreasing>(&rule)) {
      chk.row.gamma = r->gamma0;
      chk.row.bound = ngn_decreasing_bound(ck, r->gamma0);
    } else if (const auto* r = std::get_if<AdaGradNormMax>(&rule)) {
      chk.row.gamma = r->gamma;
      chk.row.bound = adagrad_bound(ck, r->gamma, r->b_init, G_sq, D_sq_grad);
    }
    chk.violated = !(chk.empirical <= chk.row.bound.total);
    rep.checks.push_back(chk);
  }
  if (const auto* r = std::get_if<DecSps>(&rule))
    if (!decsps_c0_admissible(c, r->c0))
      rep.warnings.push_back(fmt::format(
          "decsps: c0 = {:.6g} is below 1/(alpha - beta) = {:.6g}; the bound's hypothesis fails", r->c0,
          1.0 / c.gap()));
  return rep;
}

inline int cmd_bounds(const ExperimentConfig& config, const CommandOptions& opts) {
  detail::Session s(config, opts);
  const auto rep = compute_bounds(s.problem, s.config, opts.jobs);
  std::vector<BoundRow> rows;
  for (const auto& c : rep.checks) rows.push_back(c.row);
  {
    auto out = open_output(s.out / "bounds.csv");
    write_bounds_csv(out, rows);
  }
  std::ostringstream report;
  const auto& pc = rep.constants;
  fmt::print(report, "constants: alpha={:.6g} beta={:.6g} L={:.6g} sigma_int^2={:.6g} sigma_pos^2={:.6g} dist0^2={:.6g}\n",
             pc.alpha, pc.beta, pc.L, pc.sigma_int_sq, pc.sigma_pos_sq, pc.dist0_sq);
  for (const auto& w : rep.warnings) fmt::print(report, "WARNING: {}\n", w);
  for (const auto& c : rep.checks)
    fmt::print(report, "{} K={} empirical={:.6g} bound={:.6g} {}\n", c.row.method, c.row.K, c.empirical,
               c.row.bound.total, c.violated ? "VIOLATION" : "PASS");
  {
    auto out = open_output(s.out / "bounds_report.txt");
    out << report.str();
  }
  s.log() << report.str();
  return rep.any_violation() ? kExitBoundViolation : kExitOk;
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

inline const char* kEx1SurfaceConfig = R"([problem]
tag = example1
[optimizer]
rule = sgd
gamma = max
[run]
K = 2000
seeds = 0,1,2,3,4
x0 = gaussian(0, 3)
[grid]
projection = exact
beta_include_zero = true
[theory]
alpha = 2.5
beta = 2.0
)";

inline const char* kHalfspaceConfig = R"([problem]
tag = halfspace
samples_per_class = 20
d = 10
lambda = 1e-5
seed = 0
[optimizer]
rule = sgd
gamma = 0.25
[run]
K = 20000
seeds = 0,1,2,3,4,5,6
x0 = gaussian(-3, 1)
[grid]
projection = proxy
beta_nodes = shifted
)";

inline const char* kPlSweepConfig = R"([problem]
tag = example2
[optimizer]
rule = sgd
gamma = 0.05
[run]
K = 3000
seeds = 0
x0 = 1.000001, 0.999999
)";

inline std::optional<std::string> reproduce_config(const std::string& tag) {
  if (tag == "ex1-surface") return std::string(kEx1SurfaceConfig);
  if (tag == "halfspace") return std::string(kHalfspaceConfig);
  if (tag == "pl-sweep") return std::string(kPlSweepConfig);
  return std::nullopt;
}

/// min over components of T(x; 2.5, 2.0) with the exact projection, on a
/// square grid over [-3, 3]^2.
inline void write_ex1_surface(std::ostream& out) {
  const auto p = make_example1();
  out << "x,y,f,min_t\n";
  for (int a = 0; a <= 60; ++a)
    for (int b = 0; b <= 60; ++b) {
      const Point x{-3.0 + 0.1 * a, -3.0 + 0.1 * b};
      const Point xp = p.project(x);
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < p.n; ++i) {
        ConditionRecord r;
        r.inner = dot(p.grad(i, x), sub(x, xp));
        r.loss_at_x = p.value(i, x);
        r.loss_at_proj = p.value(i, xp);
        r.loss_min = p.component_lower_bound(i);
        m = std::min(m, t_value(r, 2.5, 2.0));
      }
      out << fmt_double(x[0]) << ',' << fmt_double(x[1]) << ',' << fmt_double(full_loss(p, x)) << ','
          << fmt_double(m) << '\n';
    }
}

inline int cmd_reproduce(const std::string& tag, CommandOptions opts) {
  const auto text = reproduce_config(tag);
  if (!text) throw ContractViolation("reproduce: unknown figure tag '" + tag +
                                     "' (expected ex1-surface, halfspace or pl-sweep)");
  auto config = load_config_string(*text);
  apply_seed_override(config, std::getenv("ABCOND_SEED_OVERRIDE"));
  if (!opts.out) opts.out = fs::path("reproduce-" + tag);
  {
    auto out = open_output(*opts.out / "config.ini");
    out << *text;
  }
  if (tag == "ex1-surface") {
    auto out = open_output(*opts.out / "surface.csv");
    write_ex1_surface(out);
    return cmd_check_condition(config, opts);
  }
  if (tag == "halfspace") {
    const int rc = cmd_check_condition(config, opts);
    return rc != kExitOk ? rc : cmd_diagnose(config, opts);
  }
  return cmd_diagnose(config, opts);
}

// ---------------------------------------------------------------------------
// Dispatch with error-to-exit-code mapping
// ---------------------------------------------------------------------------

template <typename F>
int guarded(F&& body, std::ostream& err) {
  try {
    return body();
  } catch (const HypothesisError& e) {
    err << "hypothesis violation: " << e.what() << '\n';
    return kExitHypothesis;
  } catch (const DeterminismError& e) {
    err << "determinism violation: " << e.what() << '\n';
    return kExitDeterminism;
  } catch (const DivergenceError& e) {
    err << "divergence at step " << e.step() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const NgnPositivityError& e) {
    err << "ngn positivity error at step " << e.step() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

/// Runs `command` on a configuration, after applying ABCOND_SEED_OVERRIDE.
inline int execute(const std::string& command, ExperimentConfig config, const CommandOptions& opts) {
  return guarded(
      [&] {
        apply_seed_override(config, std::getenv("ABCOND_SEED_OVERRIDE"));
        if (command == "run") return cmd_run(config, opts);
        if (command == "check-condition") return cmd_check_condition(config, opts);
        if (command == "diagnose") return cmd_diagnose(config, opts);
        if (command == "bounds") return cmd_bounds(config, opts);
        throw ContractViolation("unknown command '" + command + "'");
      },
      *opts.err);
}

}  // namespace abcond
