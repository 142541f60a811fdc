// Stochastic first-order methods sharing the update x^{k+1} = x^k - gamma_k g_k,
// where g_k is the gradient of the sampled component (or the mean over a
// sampled mini-batch).
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "abcond/core.hpp"

namespace abcond {

// ---------------------------------------------------------------------------
// Stepsize rules
// ---------------------------------------------------------------------------

struct SgdConstant {
  double gamma = 0.0;
};
/// gamma_k = gamma0 / sqrt(k + 1)
struct SgdDecreasing {
  double gamma0 = 0.0;
};
struct SpsMax {
  double c = 0.0;
  double gamma_b = 0.0;
};
/// c_k = c0 * sqrt(k + 1), with c_{-1} = c0 and gamma_{-1} = gamma_b.
struct DecSps {
  double c0 = 0.0;
  double gamma_b = 0.0;
};
struct Ngn {
  double gamma = 0.0;
};
/// NGN with gamma_k~ = gamma0 / sqrt(k + 1) in place of gamma.
struct NgnDecreasing {
  double gamma0 = 0.0;
};
struct AdaGradNormMax {
  double gamma = 0.0;
  double b_init = 0.0;
};

using StepsizeRule =
    std::variant<SgdConstant, SgdDecreasing, SpsMax, DecSps, Ngn, NgnDecreasing, AdaGradNormMax>;

inline std::string rule_name(const StepsizeRule& rule) {
  struct {
    std::string operator()(const SgdConstant&) const { return "sgd"; }
    std::string operator()(const SgdDecreasing&) const { return "sgd_decreasing"; }
    std::string operator()(const SpsMax&) const { return "sps_max"; }
    std::string operator()(const DecSps&) const { return "decsps"; }
    std::string operator()(const Ngn&) const { return "ngn"; }
    std::string operator()(const NgnDecreasing&) const { return "ngn_decreasing"; }
    std::string operator()(const AdaGradNormMax&) const { return "adagrad_norm_max"; }
  } visitor;
  return std::visit(visitor, rule);
}

/// "name(key=value,...)" with doubles at 17 significant digits.
inline std::string describe_rule(const StepsizeRule& rule) {
  struct {
    std::string operator()(const SgdConstant& r) const { return fmt::format("gamma={:.17g}", r.gamma); }
    std::string operator()(const SgdDecreasing& r) const { return fmt::format("gamma0={:.17g}", r.gamma0); }
    std::string operator()(const SpsMax& r) const {
      return fmt::format("c={:.17g};gamma_b={:.17g}", r.c, r.gamma_b);
    }
    std::string operator()(const DecSps& r) const {
      return fmt::format("c0={:.17g};gamma_b={:.17g}", r.c0, r.gamma_b);
    }
    std::string operator()(const Ngn& r) const { return fmt::format("gamma={:.17g}", r.gamma); }
    std::string operator()(const NgnDecreasing& r) const { return fmt::format("gamma0={:.17g}", r.gamma0); }
    std::string operator()(const AdaGradNormMax& r) const {
      return fmt::format("gamma={:.17g};b_init={:.17g}", r.gamma, r.b_init);
    }
  } visitor;
  return std::visit(visitor, rule);
}

inline void validate_rule(const StepsizeRule& rule) {
  struct {
    void operator()(const SgdConstant& r) const { require(r.gamma > 0.0, "sgd: gamma must be positive"); }
    void operator()(const SgdDecreasing& r) const { require(r.gamma0 > 0.0, "sgd_decreasing: gamma0 must be positive"); }
    void operator()(const SpsMax& r) const {
      require(r.c > 0.0 && r.gamma_b > 0.0, "sps_max: c and gamma_b must be positive");
    }
    void operator()(const DecSps& r) const {
      require(r.c0 > 0.0 && r.gamma_b > 0.0, "decsps: c0 and gamma_b must be positive");
    }
    void operator()(const Ngn& r) const { require(r.gamma > 0.0, "ngn: gamma must be positive"); }
    void operator()(const NgnDecreasing& r) const { require(r.gamma0 > 0.0, "ngn_decreasing: gamma0 must be positive"); }
    void operator()(const AdaGradNormMax& r) const {
      require(r.gamma > 0.0 && r.b_init > 0.0, "adagrad_norm_max: gamma and b_init must be positive");
    }
  } visitor;
  std::visit(visitor, rule);
}

inline bool rule_needs_component_min(const StepsizeRule& rule) {
  return std::holds_alternative<SpsMax>(rule) || std::holds_alternative<DecSps>(rule);
}

// ---------------------------------------------------------------------------
// Stepsize laws
// ---------------------------------------------------------------------------

/// min{(f_i - f_i^*) / (c ||g||^2), gamma_b}; gamma_b at a vanishing gradient.
inline double sps_stepsize(double loss_i, double loss_i_min, double grad_norm_sq, double c,
                           double gamma_b) {
  require(c > 0.0 && gamma_b > 0.0, "sps: c and gamma_b must be positive");
  require(loss_i >= loss_i_min - 1e-12, "sps: component value below its declared minimum");
  if (grad_norm_sq <= 1e-300) return gamma_b;
  const double gap = std::max(loss_i - loss_i_min, 0.0);
  return std::min(gap / (c * grad_norm_sq), gamma_b);
}

/// Running quantities carried between steps by the adaptive rules.
struct OptimizerState {
  std::size_t k = 0;
  double c_gamma = 0.0;  // DecSps: c_{k-1} gamma_{k-1}
  double c_sq = 0.0;     // AdaGradNormMax: c_{k-1}^2
  double b_sq = 0.0;     // AdaGradNormMax: b_{k-1}^2

  static OptimizerState initial(const StepsizeRule& rule) {
    OptimizerState s;
    if (const auto* r = std::get_if<DecSps>(&rule)) s.c_gamma = r->c0 * r->gamma_b;
    if (const auto* r = std::get_if<AdaGradNormMax>(&rule)) s.b_sq = r->b_init * r->b_init;
    return s;
  }
};

/// gamma_k = min{ratio, c_{k-1} gamma_{k-1}} / c_k with c_k = c0 sqrt(k+1).
/// Updates state.c_gamma to c_k gamma_k; does not advance state.k.
inline double decsps_stepsize(OptimizerState& state, const DecSps& rule, double loss_i,
                              double loss_i_min, double grad_norm_sq) {
  require(loss_i >= loss_i_min - 1e-12, "decsps: component value below its declared minimum");
  const double ck = rule.c0 * std::sqrt(static_cast<double>(state.k) + 1.0);
  const double ratio = grad_norm_sq <= 1e-300
                           ? std::numeric_limits<double>::infinity()
                           : std::max(loss_i - loss_i_min, 0.0) / grad_norm_sq;
  const double gamma = std::min(ratio, state.c_gamma) / ck;
  state.c_gamma = ck * gamma;
  return gamma;
}

/// gamma / (1 + gamma ||g||^2 / (2 f_i)). Requires f_i > 0.
inline double ngn_stepsize(double gamma, double loss_i, double grad_norm_sq) {
  require(gamma > 0.0, "ngn: gamma must be positive");
  if (!(loss_i > 0.0))
    throw NgnPositivityError(fmt::format("ngn: component value {:.17g} is not positive", loss_i), 0);
  return gamma / (1.0 + gamma * grad_norm_sq / (2.0 * std::max(loss_i, 1e-300)));
}

/// c_k^2 = max(c_{k-1}^2, ||g||^2), b_k^2 = b_{k-1}^2 + c_k^2, returns gamma / b_k.
inline double adagrad_norm_max_stepsize(OptimizerState& state, double gamma, double grad_norm_sq) {
  state.c_sq = std::max(state.c_sq, grad_norm_sq);
  state.b_sq += state.c_sq;
  return gamma / std::sqrt(state.b_sq);
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct StepRecord {
  std::size_t k = 0;
  std::size_t i_k = 0;
  double gamma_k = 0.0;
  double loss_i = 0.0;        // f_{i_k}(x^k) (batch mean when batch > 1)
  double loss_i_min = 0.0;    // f_{i_k}^* lower bound used by the rule
  double grad_norm_sq = 0.0;  // ||g_k||^2
  std::optional<Point> x;     // x^k, subject to thinning
  std::optional<double> full_loss;
  OptimizerState carry;       // state after this step (not serialized)
};

struct Trajectory {
  std::uint64_t seed = 0;
  StepsizeRule rule;
  std::string problem_tag;
  std::string sampler = SeededSampler::kAlgorithm;
  std::size_t batch = 1;
  Point x0;
  std::vector<StepRecord> steps;
  Point x_final;

  std::size_t K() const { return steps.size(); }
};

struct RunOptions {
  std::size_t record_full_loss_every = 0;  // 0 = never
  std::size_t batch = 1;
  std::optional<bool> store_every_iterate;  // default: d <= 64
  double divergence_threshold = 1e12;
};

/// One optimizer step at a time; used both for the recorded run and for replay.
class Stepper {
 public:
  Stepper(const FiniteSumProblem& problem, StepsizeRule rule, Point x0, std::uint64_t seed,
          std::size_t batch = 1, double divergence_threshold = 1e12)
      : problem_(problem),
        rule_(rule),
        sampler_(seed, problem.n),
        state_(OptimizerState::initial(rule)),
        x_(std::move(x0)),
        batch_(batch),
        threshold_(divergence_threshold) {
    validate_rule(rule_);
    require(batch_ >= 1, "batch size must be at least 1");
    require(x_.size() == problem_.d, "x0 dimension does not match problem dimension");
    require(all_finite(x_), "x0 must be finite");
    if (rule_needs_component_min(rule_))
      require(problem_.component_min.has_value(),
              rule_name(rule_) + " needs per-component minima on the problem");
  }

  const Point& x() const { return x_; }
  std::size_t k() const { return state_.k; }
  const OptimizerState& state() const { return state_; }

  /// Computes the step at the current iterate, advances, and returns its record
  /// (without the iterate itself).
  StepRecord step() {
    StepRecord rec;
    rec.k = state_.k;
    Point g(problem_.d, 0.0);
    double loss = 0.0, loss_min = 0.0;
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::size_t i = sample_index(sampler_);
      if (b == 0) rec.i_k = i;
      loss += problem_.value(i, x_);
      loss_min += problem_.component_lower_bound(i);
      const Point gi = problem_.grad(i, x_);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += gi[j];
    }
    if (batch_ > 1) {
      const double count = static_cast<double>(batch_);
      loss /= count;
      loss_min /= count;
      for (auto& v : g) v /= count;
    }
    rec.loss_i = loss;
    rec.loss_i_min = loss_min;
    rec.grad_norm_sq = norm_sq(g);
    rec.gamma_k = stepsize(rec);
    if (!(rec.gamma_k > 0.0) && !std::holds_alternative<SpsMax>(rule_) &&
        !std::holds_alternative<DecSps>(rule_))
      throw DivergenceError(fmt::format("non-positive stepsize at step {}", rec.k), rec.k);
    axpy(-rec.gamma_k, g, x_);
    for (double v : x_)
      if (!std::isfinite(v) || std::abs(v) > threshold_)
        throw DivergenceError(fmt::format("iterate diverged at step {}", rec.k), rec.k);
    ++state_.k;
    rec.carry = state_;
    return rec;
  }

 private:
  double stepsize(const StepRecord& rec) {
    const std::size_t k = state_.k;
    try {
      struct {
        Stepper& self;
        const StepRecord& rec;
        std::size_t k;
        double operator()(const SgdConstant& r) const { return r.gamma; }
        double operator()(const SgdDecreasing& r) const {
          return r.gamma0 / std::sqrt(static_cast<double>(k) + 1.0);
        }
        double operator()(const SpsMax& r) const {
          return sps_stepsize(rec.loss_i, rec.loss_i_min, rec.grad_norm_sq, r.c, r.gamma_b);
        }
        double operator()(const DecSps& r) const {
          return decsps_stepsize(self.state_, r, rec.loss_i, rec.loss_i_min, rec.grad_norm_sq);
        }
        double operator()(const Ngn& r) const {
          return ngn_stepsize(r.gamma, rec.loss_i, rec.grad_norm_sq);
        }
        double operator()(const NgnDecreasing& r) const {
          return ngn_stepsize(r.gamma0 / std::sqrt(static_cast<double>(k) + 1.0), rec.loss_i,
                              rec.grad_norm_sq);
        }
        double operator()(const AdaGradNormMax& r) const {
          return adagrad_norm_max_stepsize(self.state_, r.gamma, rec.grad_norm_sq);
        }
      } visitor{*this, rec, k};
      return std::visit(visitor, rule_);
    } catch (const NgnPositivityError& e) {
      throw NgnPositivityError(fmt::format("{} (step {}, component {})", e.what(), k, rec.i_k), k);
    }
  }

  const FiniteSumProblem& problem_;
  StepsizeRule rule_;
  SeededSampler sampler_;
  OptimizerState state_;
  Point x_;
  std::size_t batch_;
  double threshold_;
};

/// Whether iterate k is stored under the thinning policy.
inline bool stores_iterate(std::size_t k, std::size_t K, bool every) {
  return every || k % 10 == 0 || k + 1 == K;
}

/// Runs K steps. The stored record for step k carries x^k; x^K is x_final.
inline Trajectory run(const FiniteSumProblem& problem, const StepsizeRule& rule, const Point& x0,
                      std::size_t K, std::uint64_t seed, const RunOptions& options = {}) {
  require(K >= 1, "run: K must be at least 1");
  Trajectory t;
  t.seed = seed;
  t.rule = rule;
  t.problem_tag = problem.tag;
  t.batch = options.batch;
  t.x0 = x0;
  const bool every = options.store_every_iterate.value_or(problem.d <= 64);
  Stepper stepper(problem, rule, x0, seed, options.batch, options.divergence_threshold);
  t.steps.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::optional<Point> xk;
    if (stores_iterate(k, K, every)) xk = stepper.x();
    std::optional<double> fl;
    if (options.record_full_loss_every > 0 && k % options.record_full_loss_every == 0)
      fl = full_loss(problem, stepper.x());
    StepRecord rec = stepper.step();
    rec.x = std::move(xk);
    rec.full_loss = fl;
    t.steps.push_back(std::move(rec));
  }
  t.x_final = stepper.x();
  return t;
}

}  // namespace abcond
