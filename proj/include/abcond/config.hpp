// Experiment configuration: an INI file with [problem], [optimizer], [run],
// [grid], [theory] and [output] sections, one experiment per file.
#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "abcond/core.hpp"
#include "abcond/diagnostics.hpp"
#include "abcond/optimizers.hpp"
#include "abcond/problems.hpp"

namespace abcond {

struct ExperimentConfig {
  // [problem]
  std::string problem = "example1";
  std::map<std::string, std::string> problem_params;
  // [optimizer]
  std::string rule = "sgd";
  std::map<std::string, std::string> rule_params;
  std::size_t batch = 1;
  // [run]
  std::size_t K = 1000;
  std::vector<std::uint64_t> seeds{0};
  std::string x0 = "0";
  std::size_t record_full_loss_every = 0;
  // [grid]
  double alpha_min = 1e-2, alpha_max = 1e4;
  std::size_t alpha_points = 150;
  double beta_min = 1e-2, beta_max = 1e4;
  std::size_t beta_points = 150;
  bool beta_include_zero = false;
  bool beta_shifted = false;  // beta nodes are alpha nodes minus the margin
  double margin = 0.1;
  double tolerance = 1e-9;
  ProjectionMode projection = ProjectionMode::Proxy;
  double tail_fraction = 0.0;
  TSign sign = TSign::Definition;
  // [theory]
  std::optional<double> alpha, beta, L, sigma_int_sq, sigma_pos_sq, ngn_third_denominator;
  std::vector<std::size_t> bound_Ks;
  // [output]
  std::string out_dir = "out";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ContractViolation("config: " + key + " expects a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    std::size_t used = 0;
    const auto u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ContractViolation("config: " + key + " expects a nonnegative integer, got '" + v + "'");
  }
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split(v, ',')) out.push_back(parse_double(key, s));
  return out;
}

/// Rows separated by ';', entries by ','.
inline std::vector<Point> parse_rows(const std::string& key, const std::string& v) {
  std::vector<Point> rows;
  for (const auto& r : split(v, ';'))
    if (!r.empty()) rows.push_back(parse_doubles(key, r));
  return rows;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ContractViolation("config: " + key + " expects true/false, got '" + v + "'");
}

class ParamView {
 public:
  ParamView(const std::map<std::string, std::string>& params, std::string section)
      : params_(params), section_(std::move(section)) {}

  bool has(const std::string& k) const { return params_.count(k) > 0; }
  const std::string& raw(const std::string& k) const {
    auto it = params_.find(k);
    if (it == params_.end()) throw ContractViolation("config: [" + section_ + "] needs " + k);
    return it->second;
  }
  double num(const std::string& k) const { return parse_double(k, raw(k)); }
  double num(const std::string& k, double fallback) const { return has(k) ? num(k) : fallback; }
  std::size_t count(const std::string& k) const { return parse_uint(k, raw(k)); }
  std::size_t count(const std::string& k, std::size_t fallback) const {
    return has(k) ? count(k) : fallback;
  }

  void only(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : params_)
      if (!allowed.count(k))
        throw ContractViolation("config: unknown key '" + k + "' in [" + section_ + "]");
  }

 private:
  const std::map<std::string, std::string>& params_;
  std::string section_;
};

}  // namespace detail

inline ExperimentConfig load_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ContractViolation(std::string("config: ") + e.what());
  }
  static const std::set<std::string> sections{"problem", "optimizer", "run", "grid", "theory", "output"};
  std::map<std::string, std::map<std::string, std::string>> kv;
  for (const auto& [name, sec] : tree) {
    if (!sections.count(name)) throw ContractViolation("config: unknown section [" + name + "]");
    for (const auto& [k, v] : sec) kv[name][k] = detail::trim(v.data());
  }

  ExperimentConfig c;
  auto& prob = kv["problem"];
  if (prob.count("tag")) c.problem = prob["tag"];
  prob.erase("tag");
  c.problem_params = prob;

  auto& opt = kv["optimizer"];
  if (opt.count("rule")) c.rule = opt["rule"];
  if (opt.count("batch")) c.batch = detail::parse_uint("batch", opt["batch"]);
  opt.erase("rule");
  opt.erase("batch");
  c.rule_params = opt;

  {
    detail::ParamView run(kv["run"], "run");
    run.only({"K", "seeds", "x0", "record_full_loss_every"});
    c.K = run.count("K", c.K);
    if (run.has("seeds")) {
      c.seeds.clear();
      for (const auto& s : detail::split(run.raw("seeds"), ','))
        c.seeds.push_back(detail::parse_uint("seeds", s));
    }
    if (run.has("x0")) c.x0 = run.raw("x0");
    c.record_full_loss_every = run.count("record_full_loss_every", 0);
  }
  {
    detail::ParamView g(kv["grid"], "grid");
    g.only({"alpha_min", "alpha_max", "alpha_points", "beta_min", "beta_max", "beta_points",
            "beta_include_zero", "beta_nodes", "margin", "tolerance", "projection", "tail_fraction", "sign"});
    c.alpha_min = g.num("alpha_min", c.alpha_min);
    c.alpha_max = g.num("alpha_max", c.alpha_max);
    c.alpha_points = g.count("alpha_points", c.alpha_points);
    c.beta_min = g.num("beta_min", c.beta_min);
    c.beta_max = g.num("beta_max", c.beta_max);
    c.beta_points = g.count("beta_points", c.beta_points);
    if (g.has("beta_include_zero")) c.beta_include_zero = detail::parse_bool("beta_include_zero", g.raw("beta_include_zero"));
    if (g.has("beta_nodes")) {
      const auto& m = g.raw("beta_nodes");
      if (m == "log") c.beta_shifted = false;
      else if (m == "shifted") c.beta_shifted = true;
      else throw ContractViolation("config: beta_nodes must be log or shifted");
    }
    c.margin = g.num("margin", c.margin);
    c.tolerance = g.num("tolerance", c.tolerance);
    c.tail_fraction = g.num("tail_fraction", c.tail_fraction);
    if (g.has("projection")) {
      const auto& m = g.raw("projection");
      if (m == "proxy") c.projection = ProjectionMode::Proxy;
      else if (m == "exact") c.projection = ProjectionMode::Exact;
      else throw ContractViolation("config: projection must be proxy or exact");
    }
    if (g.has("sign")) {
      const auto& s = g.raw("sign");
      if (s == "definition") c.sign = TSign::Definition;
      else if (s == "caption") c.sign = TSign::Caption;
      else throw ContractViolation("config: sign must be definition or caption");
    }
  }
  {
    detail::ParamView t(kv["theory"], "theory");
    t.only({"alpha", "beta", "L", "sigma_int_sq", "sigma_pos_sq", "ngn_third_denominator", "K"});
    auto opt_num = [&](const char* k) -> std::optional<double> {
      if (!t.has(k)) return std::nullopt;
      return t.num(k);
    };
    c.alpha = opt_num("alpha");
    c.beta = opt_num("beta");
    c.L = opt_num("L");
    c.sigma_int_sq = opt_num("sigma_int_sq");
    c.sigma_pos_sq = opt_num("sigma_pos_sq");
    c.ngn_third_denominator = opt_num("ngn_third_denominator");
    if (t.has("K"))
      for (const auto& s : detail::split(t.raw("K"), ','))
        c.bound_Ks.push_back(detail::parse_uint("K", s));
  }
  {
    detail::ParamView o(kv["output"], "output");
    o.only({"dir"});
    if (o.has("dir")) c.out_dir = o.raw("dir");
  }

  require(c.K >= 1, "config: K must be at least 1");
  require(c.batch >= 1, "config: batch must be at least 1");
  require(!c.seeds.empty(), "config: seeds must be nonempty");
  require(c.alpha_points >= 1, "config: alpha grid is empty");
  require(c.beta_points >= 1 || c.beta_include_zero || c.beta_shifted, "config: beta grid is empty");
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "config: cannot read " + path);
  return load_config(in);
}

inline ExperimentConfig load_config_string(const std::string& text) {
  std::istringstream in(text);
  return load_config(in);
}

/// Replaces the configured seeds with a comma-separated override list.
inline void apply_seed_override(ExperimentConfig& c, const char* value) {
  if (value == nullptr || *value == '\0') return;
  c.seeds.clear();
  for (const auto& s : detail::split(value, ','))
    c.seeds.push_back(detail::parse_uint("ABCOND_SEED_OVERRIDE", s));
  require(!c.seeds.empty(), "ABCOND_SEED_OVERRIDE lists no seeds");
}

// ---------------------------------------------------------------------------
// Resolution into library objects
// ---------------------------------------------------------------------------

inline FiniteSumProblem build_problem(const ExperimentConfig& c) {
  detail::ParamView p(c.problem_params, "problem");
  const auto& tag = c.problem;
  if (tag == "example1" || tag == "example2" || tag == "example7" || tag == "example10") {
    p.only({});
    if (tag == "example1") return make_example1();
    if (tag == "example2") return make_example2();
    if (tag == "example7") return make_example7();
    return make_example10();
  }
  if (tag == "ratio_scalar") {
    p.only({"n", "d", "offsets"});
    return make_ratio_family(p.count("n"), p.count("d"), detail::parse_doubles("offsets", p.raw("offsets")));
  }
  if (tag == "ratio_vector") {
    p.only({"n", "d", "offsets"});
    return make_ratio_family(p.count("n"), p.count("d"), detail::parse_rows("offsets", p.raw("offsets")));
  }
  if (tag == "matrix_factorization") {
    p.only({"n", "m", "k", "noise_sd", "seed"});
    return make_matrix_factorization(p.count("n"), p.count("m"), p.count("k"), p.num("noise_sd"),
                                     p.count("seed", 0));
  }
  if (tag == "halfspace") {
    p.only({"samples_per_class", "d", "lambda", "seed", "class_mean", "class_sd"});
    return make_halfspace(p.count("samples_per_class"), p.count("d"), p.num("lambda", 1e-5),
                          p.count("seed", 0), p.num("class_mean", 1.0), p.num("class_sd", 2.0));
  }
  if (tag == "two_layer_relu") {
    p.only({"n", "d", "k", "lambda1", "lambda2", "seed", "margin"});
    return make_two_layer_relu(p.count("n"), p.count("d"), p.count("k"), p.num("lambda1"),
                               p.num("lambda2"), p.count("seed", 0), p.num("margin", 0.5));
  }
  if (tag == "quadratic") {
    p.only({"centers", "offset"});
    return make_quadratic(detail::parse_rows("centers", p.raw("centers")), p.num("offset", 0.0));
  }
  throw ContractViolation("config: unknown problem tag '" + tag + "'");
}

/// x0 is an explicit list (a single value is broadcast), or gaussian(sd),
/// gaussian(mean, sd) or gaussian(mean, sd, seed). Without an explicit seed
/// the run seed is used.
inline Point resolve_x0(const ExperimentConfig& c, const FiniteSumProblem& problem,
                        std::uint64_t run_seed) {
  const std::string spec = detail::trim(c.x0);
  if (spec.rfind("gaussian(", 0) == 0) {
    require(spec.back() == ')', "config: malformed x0 '" + spec + "'");
    const auto args = detail::parse_doubles("x0", spec.substr(9, spec.size() - 10));
    require(args.size() >= 1 && args.size() <= 3, "config: gaussian() takes 1 to 3 arguments");
    const double mean = args.size() >= 2 ? args[0] : 0.0;
    const double sd = args.size() >= 2 ? args[1] : args[0];
    require(sd >= 0.0, "config: gaussian sd must be nonnegative");
    std::uint64_t seed = run_seed;
    if (args.size() == 3) {
      require(args[2] >= 0.0 && args[2] == std::floor(args[2]), "config: gaussian seed must be an integer");
      seed = static_cast<std::uint64_t>(args[2]);
    }
    detail::GaussianSource src(mix64(seed ^ 0x5851F42D4C957F2DULL));
    Point x(problem.d);
    for (auto& v : x) v = src(mean, sd);
    return x;
  }
  const auto vals = detail::parse_doubles("x0", spec);
  if (vals.size() == 1) return Point(problem.d, vals[0]);
  require(vals.size() == problem.d, "config: x0 has " + std::to_string(vals.size()) +
                                        " entries but the problem dimension is " +
                                        std::to_string(problem.d));
  return vals;
}

/// gamma = max (or gamma0 = max) resolves to (alpha - beta)/(2L) from [theory].
inline StepsizeRule resolve_rule(const ExperimentConfig& c, const FiniteSumProblem& problem) {
  detail::ParamView p(c.rule_params, "optimizer");
  auto stepsize = [&](const std::string& key) {
    if (p.raw(key) != "max") return p.num(key);
    require(c.alpha && c.beta, "config: " + key + " = max needs [theory] alpha and beta");
    const auto L = c.L ? c.L : problem.smoothness;
    require(L.has_value(), "config: " + key + " = max needs a smoothness constant");
    return (*c.alpha - *c.beta) / (2.0 * *L);
  };
  StepsizeRule rule;
  const auto& r = c.rule;
  if (r == "sgd") {
    p.only({"gamma"});
    rule = SgdConstant{stepsize("gamma")};
  } else if (r == "sgd_decreasing") {
    p.only({"gamma0"});
    rule = SgdDecreasing{stepsize("gamma0")};
  } else if (r == "sps_max") {
    p.only({"c", "gamma_b"});
    rule = SpsMax{p.num("c"), p.num("gamma_b")};
  } else if (r == "decsps") {
    p.only({"c0", "gamma_b"});
    rule = DecSps{p.num("c0"), p.num("gamma_b")};
  } else if (r == "ngn") {
    p.only({"gamma"});
    rule = Ngn{p.num("gamma")};
  } else if (r == "ngn_decreasing") {
    p.only({"gamma0"});
    rule = NgnDecreasing{p.num("gamma0")};
  } else if (r == "adagrad_norm_max") {
    p.only({"gamma", "b_init"});
    rule = AdaGradNormMax{p.num("gamma"), p.num("b_init")};
  } else {
    throw ContractViolation("config: unknown rule '" + r + "'");
  }
  validate_rule(rule);
  return rule;
}

/// With beta_nodes = shifted every alpha node a contributes beta = a - margin
/// (when positive), so each alpha row has a cell exactly on the validity edge.
inline std::vector<double> beta_grid(const ExperimentConfig& c) {
  std::vector<double> b;
  if (c.beta_include_zero) b.push_back(0.0);
  if (c.beta_shifted) {
    for (double a : log_grid(c.alpha_min, c.alpha_max, c.alpha_points)) {
      double v = a - c.margin;
      if (v <= 0.0) continue;
      while (v + c.margin > a) v = std::nextafter(v, 0.0);
      b.push_back(v);
    }
  } else if (c.beta_points > 0) {
    const auto g = log_grid(c.beta_min, c.beta_max, c.beta_points);
    b.insert(b.end(), g.begin(), g.end());
  }
  return b;
}

inline std::vector<double> alpha_grid(const ExperimentConfig& c) {
  return log_grid(c.alpha_min, c.alpha_max, c.alpha_points);
}

}  // namespace abcond
