// Per-step stepsize invariants, shared by the unit tests and the acceptance run.
#pragma once

#include <cmath>
#include <string>
#include <variant>

#include "abcond/optimizers.hpp"

namespace abcond::testing {

struct InvariantReport {
  std::size_t steps = 0;
  std::size_t violations = 0;
  double worst_excess = 0.0;  // largest amount by which a checked inequality failed
  std::string first_failure;

  void check(bool ok, double excess, const std::string& what, std::size_t k) {
    if (ok) return;
    ++violations;
    worst_excess = std::max(worst_excess, excess);
    if (first_failure.empty()) first_failure = what + " at step " + std::to_string(k);
  }
};

/// Checks every step of a trajectory against the range and inequality lemmas of
/// its rule. L is the declared smoothness constant; slack is additive.
inline InvariantReport check_step_invariants(const Trajectory& t, double L, double slack = 1e-12) {
  InvariantReport rep;
  rep.steps = t.K();
  const auto& rule = t.rule;
  for (std::size_t k = 0; k < t.K(); ++k) {
    const auto& s = t.steps[k];
    const double g = s.gamma_k, gn = s.grad_norm_sq, gap = s.loss_i - s.loss_i_min;
    if (const auto* r = std::get_if<SpsMax>(&rule)) {
      const double lo = std::min(1.0 / (2.0 * r->c * L), r->gamma_b);
      rep.check(g >= lo - slack, lo - g, "sps lower range", k);
      rep.check(g <= r->gamma_b, g - r->gamma_b, "sps upper range", k);
      const double lhs = g * g * gn, rhs = g / r->c * gap;
      rep.check(lhs <= rhs + slack, lhs - rhs, "sps inequality", k);
    } else if (const auto* r = std::get_if<Ngn>(&rule)) {
      const double gam = r->gamma;
      const double lo = gam / (1.0 + gam * L);
      rep.check(g >= lo - slack, lo - g, "ngn lower range", k);
      rep.check(g <= gam + slack, g - gam, "ngn upper range", k);
      const double lhs = g * g * gn;
      const double rhs = 4.0 * gam * L / (1.0 + 2.0 * gam * L) * g * gap +
                         2.0 * gam * gam * L / (1.0 + gam * L) *
                             std::max((2.0 * gam * L - 1.0) / (2.0 * gam * L + 1.0), 0.0) * s.loss_i_min;
      rep.check(lhs <= rhs + slack, lhs - rhs, "ngn inequality", k);
    } else if (const auto* r = std::get_if<DecSps>(&rule)) {
      const double ck = r->c0 * std::sqrt(static_cast<double>(k) + 1.0);
      const double cap = r->c0 * r->gamma_b / ck;
      rep.check(g <= cap * (1.0 + 1e-15) + slack, g - cap, "decsps upper range", k);
      const double lo = std::min(1.0 / (2.0 * ck * L), cap);
      rep.check(g >= lo - slack, lo - g, "decsps lower range", k);
      if (k > 0) {
        const double prev = t.steps[k - 1].gamma_k;
        rep.check(g <= prev, g - prev, "decsps monotone", k);
      }
    } else if (std::holds_alternative<AdaGradNormMax>(rule)) {
      const auto& now = s.carry;
      double prev_b = 0.0, prev_c = 0.0;
      if (k == 0) {
        const auto& a = std::get<AdaGradNormMax>(rule);
        prev_b = a.b_init * a.b_init;
      } else {
        prev_b = t.steps[k - 1].carry.b_sq;
        prev_c = t.steps[k - 1].carry.c_sq;
      }
      rep.check(now.c_sq == std::max(prev_c, gn), std::abs(now.c_sq - std::max(prev_c, gn)),
                "adagrad c recursion", k);
      rep.check(now.b_sq == prev_b + now.c_sq, std::abs(now.b_sq - (prev_b + now.c_sq)),
                "adagrad b recursion", k);
      rep.check(now.b_sq >= prev_b, prev_b - now.b_sq, "adagrad b monotone", k);
      if (k > 0) rep.check(g <= t.steps[k - 1].gamma_k, g - t.steps[k - 1].gamma_k, "adagrad gamma monotone", k);
    }
  }
  return rep;
}

}  // namespace abcond::testing
