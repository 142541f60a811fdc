// Closed-form convergence bounds and stepsize restrictions under the
// alpha-beta-condition. Every bound bounds min_{k<K} E[f(x^k) - f^*].
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "abcond/core.hpp"

namespace abcond {

struct ProblemConstants {
  double alpha = 0.0;
  double beta = 0.0;
  double L = 0.0;
  double sigma_int_sq = 0.0;  // E_i[f^* - f_i^*]
  double sigma_pos_sq = 0.0;  // E_i[f_i^*]
  double dist0_sq = 0.0;      // E[dist(x^0, S)^2]
  std::size_t K = 1;

  double gap() const { return alpha - beta; }
};

inline void validate_constants(const ProblemConstants& c) {
  require(c.alpha > c.beta && c.beta >= 0.0, "constants: need alpha > beta >= 0");
  require(c.sigma_int_sq >= 0.0 && c.sigma_pos_sq >= 0.0 && c.dist0_sq >= 0.0,
          "constants: variance-like quantities must be nonnegative");
  require(c.K >= 1, "constants: K must be at least 1");
  require(c.L > 0.0, "constants: L must be positive");
}

struct BoundBreakdown {
  double total = 0.0;
  std::array<double, 4> terms{};  // unused terms are 0

  static BoundBreakdown of(double t1, double t2 = 0.0, double t3 = 0.0, double t4 = 0.0) {
    return BoundBreakdown{t1 + t2 + t3 + t4, {t1, t2, t3, t4}};
  }
};

/// (alpha - beta) / (2L); 0 when alpha = beta.
inline double sgd_max_stepsize(const ProblemConstants& c) {
  require(c.L > 0.0, "sgd_max_stepsize: L must be positive");
  require(c.alpha >= c.beta, "sgd_max_stepsize: alpha must be at least beta");
  return c.gap() / (2.0 * c.L);
}

namespace detail {

inline void check_sgd_stepsize(const ProblemConstants& c, double gamma, const char* name) {
  const double cap = sgd_max_stepsize(c);
  if (!(gamma > 0.0) || gamma > cap * (1.0 + 1e-12))
    throw HypothesisError(fmt::format(
        "{}: stepsize {:.17g} outside (0, (alpha - beta)/(2L)] = (0, {:.17g}]", name, gamma, cap));
}

inline double log_ratio(std::size_t K) {
  const double k = static_cast<double>(K);
  return std::log(k + 1.0) / std::sqrt(k);
}

}  // namespace detail

/// Constant-stepsize SGD, gamma <= (alpha - beta)/(2L):
///   dist0^2 / (K gamma (alpha-beta)) + 2 L gamma sigma^2/(alpha-beta) + 2 beta sigma^2/(alpha-beta)
inline BoundBreakdown sgd_bound(const ProblemConstants& c, double gamma) {
  validate_constants(c);
  detail::check_sgd_stepsize(c, gamma, "sgd_bound");
  const double g = c.gap(), K = static_cast<double>(c.K);
  return BoundBreakdown::of(c.dist0_sq / K / (gamma * g), 2.0 * c.L * gamma / g * c.sigma_int_sq,
                            2.0 * c.beta / g * c.sigma_int_sq);
}

/// SGD with gamma_k = gamma0 / sqrt(k+1), gamma0 <= (alpha - beta)/(2L).
inline BoundBreakdown sgd_decreasing_bound(const ProblemConstants& c, double gamma0) {
  validate_constants(c);
  detail::check_sgd_stepsize(c, gamma0, "sgd_decreasing_bound");
  const double g = c.gap(), sk = std::sqrt(static_cast<double>(c.K));
  return BoundBreakdown::of(5.0 * c.dist0_sq / (4.0 * g * gamma0 * sk),
                            5.0 * gamma0 * c.L * c.sigma_int_sq / g * detail::log_ratio(c.K),
                            2.0 * c.beta / g * c.sigma_int_sq);
}

/// SPS_max with c > 1/(2(alpha - beta)):
///   c1 dist0^2 / K + 2 alpha c1 gamma_b sigma^2,
///   gamma_min = min{1/(2cL), gamma_b},  c1 = c / (gamma_min (2(alpha-beta)c - 1)).
inline BoundBreakdown sps_bound(const ProblemConstants& c, double sps_c, double gamma_b) {
  validate_constants(c);
  require(gamma_b > 0.0, "sps_bound: gamma_b must be positive");
  const double threshold = 1.0 / (2.0 * c.gap());
  if (!(sps_c > threshold))
    throw HypothesisError(fmt::format(
        "sps_bound: c = {:.17g} must exceed 1/(2(alpha - beta)) = {:.17g}", sps_c, threshold));
  const double gamma_min = std::min(1.0 / (2.0 * sps_c * c.L), gamma_b);
  const double c1 = sps_c / (gamma_min * (2.0 * c.gap() * sps_c - 1.0));
  return BoundBreakdown::of(c1 / static_cast<double>(c.K) * c.dist0_sq,
                            2.0 * c.alpha * c1 * gamma_b * c.sigma_int_sq);
}

namespace detail {

inline void check_ngn_hypothesis(const ProblemConstants& c, const char* name) {
  if (c.alpha < c.beta + 1.0)
    throw HypothesisError(fmt::format("{}: needs alpha >= beta + 1 (alpha = {:.17g}, beta = {:.17g})",
                                      name, c.alpha, c.beta));
}

}  // namespace detail

/// NGN with constant gamma and alpha >= beta + 1, c2 = 2 gamma L (alpha-beta-1) + alpha - beta:
///   dist0^2 (1+2gL)^2 / (2 gamma K c2) + 3 L gamma alpha (1+gL) sigma^2 / c2
///   + (gamma L / a) max{2gL - 1, 0} sigma_pos^2 + 2 beta sigma^2 / c2,
/// where the third-term denominator a defaults to c2.
inline BoundBreakdown ngn_bound(const ProblemConstants& c, double gamma,
                                std::optional<double> third_term_denominator = std::nullopt) {
  validate_constants(c);
  require(gamma > 0.0, "ngn_bound: gamma must be positive");
  detail::check_ngn_hypothesis(c, "ngn_bound");
  const double gl = gamma * c.L;
  const double c2 = 2.0 * gl * (c.gap() - 1.0) + c.gap();
  const double a = third_term_denominator.value_or(c2);
  require(a > 0.0, "ngn_bound: third-term denominator must be positive");
  const double t1 = c.dist0_sq / (2.0 * gamma * static_cast<double>(c.K)) * (1.0 + 2.0 * gl) *
                    (1.0 + 2.0 * gl) / c2;
  const double t2 = 3.0 * gl * c.alpha * (1.0 + gl) * c.sigma_int_sq / c2;
  const double t3 = gl / a * std::max(2.0 * gl - 1.0, 0.0) * c.sigma_pos_sq;
  const double t4 = 2.0 * c.beta * c.sigma_int_sq / c2;
  return BoundBreakdown::of(t1, t2, t3, t4);
}

struct NgnDecreasingConstants {
  double C1, C2, C3, C4;
};

inline NgnDecreasingConstants ngn_decreasing_constants(double gamma0, double L) {
  const double gl = gamma0 * L;
  const double common = (1.0 + gl) * (1.0 + 2.0 * gl);
  return {5.0 * common / (8.0 * gamma0), 15.0 * gl * common / 2.0, common,
          5.0 * common * gl * std::max(2.0 * gl - 1.0, 0.0) / 2.0};
}

/// NGN with gamma~_k = gamma0 / sqrt(k+1) and alpha >= beta + 1:
///   C1 dist0^2/sqrt K + C2 log(K+1)/sqrt K alpha sigma^2 + C3 beta sigma^2/(alpha-beta)
///   + C4 log(K+1)/sqrt K sigma_pos^2.
inline BoundBreakdown ngn_decreasing_bound(const ProblemConstants& c, double gamma0) {
  validate_constants(c);
  require(gamma0 > 0.0, "ngn_decreasing_bound: gamma0 must be positive");
  detail::check_ngn_hypothesis(c, "ngn_decreasing_bound");
  const auto k = ngn_decreasing_constants(gamma0, c.L);
  const double lr = detail::log_ratio(c.K);
  return BoundBreakdown::of(k.C1 * c.dist0_sq / std::sqrt(static_cast<double>(c.K)),
                            k.C2 * lr * c.alpha * c.sigma_int_sq,
                            k.C3 * c.beta * c.sigma_int_sq / c.gap(), k.C4 * lr * c.sigma_pos_sq);
}

/// Smoothness surrogate L~ = max{L, 1/(2 c0 gamma_b)}.
inline double decsps_effective_L(double L, double c0, double gamma_b) {
  return std::max(L, 1.0 / (2.0 * c0 * gamma_b));
}

/// The DecSPS analysis needs c_k = c0 sqrt(k+1) >= 1/(alpha - beta) for all k.
inline bool decsps_c0_admissible(const ProblemConstants& c, double c0) {
  return c0 >= 1.0 / c.gap();
}

/// DecSPS with c_k = c0 sqrt(k+1) and iterate diameter D^2 = max_k dist(x^k, S)^2:
///   (2 L~ D^2 c0 + 2 sigma^2 / c0) / (sqrt K (alpha-beta)) + 2 beta sigma^2/(alpha-beta).
inline BoundBreakdown decsps_bound(const ProblemConstants& c, double c0, double gamma_b,
                                   double D_sq) {
  validate_constants(c);
  require(c0 > 0.0 && gamma_b > 0.0, "decsps_bound: c0 and gamma_b must be positive");
  require(D_sq >= 0.0, "decsps_bound: D^2 must be nonnegative");
  const double Lt = decsps_effective_L(c.L, c0, gamma_b);
  const double denom = std::sqrt(static_cast<double>(c.K)) * c.gap();
  return BoundBreakdown::of(2.0 * Lt * D_sq * c0 / denom, 2.0 * c.sigma_int_sq / c0 / denom,
                            2.0 * c.beta / c.gap() * c.sigma_int_sq);
}

/// AdaGrad-norm-max with b_init >= 2 L gamma/(alpha - beta), G^2 bounding every
/// ||grad f_i(x^k)||^2 and D^2 = max_i ||grad f_i(x^0)||^2:
///   dist0^2 sqrt(b^2 + G^2 K) / (gamma K (alpha-beta))
///   + 2 alpha sigma^2 sqrt(b^2 + G^2 K) sqrt(b^2 + D^2 (K+1)) / ((alpha-beta) K D^2).
inline BoundBreakdown adagrad_bound(const ProblemConstants& c, double gamma, double b_init,
                                    double G_sq, double D_sq) {
  validate_constants(c);
  require(gamma > 0.0 && b_init > 0.0, "adagrad_bound: gamma and b_init must be positive");
  require(G_sq >= 0.0 && D_sq >= 0.0, "adagrad_bound: G^2 and D^2 must be nonnegative");
  const double need = 2.0 * c.L * gamma / c.gap();
  if (b_init < need)
    throw HypothesisError(fmt::format(
        "adagrad_bound: b_init = {:.17g} below 2 L gamma/(alpha - beta) = {:.17g}", b_init, need));
  const double K = static_cast<double>(c.K), b2 = b_init * b_init;
  const double growth = std::sqrt(b2 + G_sq * K);
  const double t1 = c.dist0_sq / (gamma * K * c.gap()) * growth;
  double t2 = 0.0;
  if (c.sigma_int_sq > 0.0) {
    require(D_sq > 0.0, "adagrad_bound: D^2 must be positive when sigma_int^2 > 0");
    t2 = 2.0 * c.alpha / (c.gap() * K * D_sq) * c.sigma_int_sq * growth *
         std::sqrt(b2 + D_sq * (K + 1.0));
  }
  return BoundBreakdown::of(t1, t2);
}

}  // namespace abcond
