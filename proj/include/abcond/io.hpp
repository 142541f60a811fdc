// CSV and sidecar serialization. Doubles are written with 17 significant
// digits so files round-trip exactly; fields never need quoting.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "abcond/core.hpp"
#include "abcond/diagnostics.hpp"
#include "abcond/optimizers.hpp"
#include "abcond/theory.hpp"

namespace abcond {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  return fmt::format("{:.17g}", v);
}

inline std::string fmt_point(const Point& x, char sep = ' ') {
  std::string s;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j) s += sep;
    s += fmt_double(x[j]);
  }
  return s;
}

/// Opens a file for writing, creating parent directories. Throws
/// ContractViolation when the location is not writable.
inline std::ofstream open_output(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(std::ostream& out, const Trajectory& t) {
  out << "k,i_k,gamma_k,loss_i,grad_norm_sq,full_loss\n";
  for (const auto& s : t.steps)
    out << s.k << ',' << s.i_k << ',' << fmt_double(s.gamma_k) << ',' << fmt_double(s.loss_i) << ','
        << fmt_double(s.grad_norm_sq) << ',' << (s.full_loss ? fmt_double(*s.full_loss) : "") << '\n';
}

/// key=value lines describing how to regenerate the run.
inline void write_trajectory_meta(std::ostream& out, const Trajectory& t) {
  out << "problem=" << t.problem_tag << '\n'
      << "rule=" << rule_name(t.rule) << '\n'
      << "hyperparameters=" << describe_rule(t.rule) << '\n'
      << "seed=" << t.seed << '\n'
      << "sampler=" << t.sampler << '\n'
      << "batch=" << t.batch << '\n'
      << "K=" << t.K() << '\n'
      << "x0=" << fmt_point(t.x0) << '\n'
      << "x_final=" << fmt_point(t.x_final) << '\n';
}

inline const char* kConditionHeader =
    "seed,k,i_k,inner,loss_at_x,loss_at_proj,loss_min,dist_to_proj";

inline void write_condition_rows(std::ostream& out, std::uint64_t seed,
                                 const std::vector<ConditionRecord>& records) {
  for (const auto& r : records)
    out << seed << ',' << r.k << ',' << r.i_k << ',' << fmt_double(r.inner) << ','
        << fmt_double(r.loss_at_x) << ',' << fmt_double(r.loss_at_proj) << ','
        << fmt_double(r.loss_min) << ',' << fmt_double(r.dist_to_proj) << '\n';
}

inline void write_grid_csv(std::ostream& out, const FeasibilityGrid& g) {
  out << "alpha,beta,min_t,feasible\n";
  for (std::size_t a = 0; a < g.alphas.size(); ++a)
    for (std::size_t b = 0; b < g.betas.size(); ++b) {
      const double v = g.min_t_at(a, b);
      out << fmt_double(g.alphas[a]) << ',' << fmt_double(g.betas[b]) << ','
          << (std::isinf(v) ? (v > 0 ? "inf" : "-inf") : fmt_double(v)) << ','
          << (g.feasible_at(a, b) ? 1 : 0) << '\n';
    }
}

inline void write_pl_csv(std::ostream& out, const std::vector<PLRecord>& records) {
  out << "k,delta,log_lhs,flag\n";
  for (const auto& r : records)
    out << r.k << ',' << fmt_double(r.delta) << ',' << fmt_double(r.log_lhs) << ','
        << (r.flagged ? 1 : 0) << '\n';
}

inline void write_angle_csv(std::ostream& out, const std::vector<DiagnosticStep>& steps) {
  out << "k,angle_rad,inner_sign\n";
  for (const auto& s : steps) {
    const int sign = s.angle.inner > 0.0 ? 1 : (s.angle.inner < 0.0 ? -1 : 0);
    out << s.k << ',' << fmt_double(s.angle.angle) << ',' << sign << '\n';
  }
}

struct BoundRow {
  std::string method;
  std::size_t K = 0;
  double gamma = 0.0;
  BoundBreakdown bound;
};

inline void write_bounds_csv(std::ostream& out, const std::vector<BoundRow>& rows) {
  out << "method,K,gamma,bound,term1,term2,term3,term4\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.K << ',' << fmt_double(r.gamma) << ',' << fmt_double(r.bound.total);
    for (double t : r.bound.terms) out << ',' << fmt_double(t);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Generated datasets: "# family=<tag> seed=<s>" then long-format rows.
// ---------------------------------------------------------------------------

inline void write_dataset_csv(std::ostream& out, const GeneratedDataset& ds) {
  out << "# family=" << ds.family << " seed=" << ds.seed << '\n';
  out << "array,row,col,value\n";
  for (const auto& a : ds.arrays)
    for (std::size_t r = 0; r < a.rows; ++r)
      for (std::size_t c = 0; c < a.cols; ++c)
        out << a.name << ',' << r << ',' << c << ',' << fmt_double(a.at(r, c)) << '\n';
}

inline GeneratedDataset read_dataset_csv(std::istream& in) {
  GeneratedDataset ds;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line.rfind("# ", 0) == 0,
          "dataset csv: missing header comment");
  {
    std::istringstream hs(line.substr(2));
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      require(eq != std::string::npos, "dataset csv: malformed header token " + tok);
      const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "family") ds.family = val;
      if (key == "seed") ds.seed = std::stoull(val);
    }
  }
  require(static_cast<bool>(std::getline(in, line)) && line == "array,row,col,value",
          "dataset csv: unexpected column header");
  struct Cell {
    std::size_t r, c;
    double v;
  };
  std::vector<std::pair<std::string, std::vector<Cell>>> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, r, c, v;
    std::getline(ls, name, ',');
    std::getline(ls, r, ',');
    std::getline(ls, c, ',');
    std::getline(ls, v, ',');
    if (cells.empty() || cells.back().first != name) cells.emplace_back(name, std::vector<Cell>{});
    cells.back().second.push_back({std::stoul(r), std::stoul(c), std::stod(v)});
  }
  for (auto& [name, list] : cells) {
    DataArray a;
    a.name = name;
    for (const auto& cell : list) {
      a.rows = std::max(a.rows, cell.r + 1);
      a.cols = std::max(a.cols, cell.c + 1);
    }
    a.values.assign(a.rows * a.cols, 0.0);
    for (const auto& cell : list) a.values[cell.r * a.cols + cell.c] = cell.v;
    ds.arrays.push_back(std::move(a));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Reading back
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw ContractViolation("csv has no column " + name);
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads a header-first CSV; every row must have as many fields as the header.
inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "csv: empty input");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_csv_line(line);
    require(row.size() == t.header.size(), "csv: row width differs from header: " + line);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot read " + path.string());
  return read_csv(in);
}

inline std::map<std::string, std::string> read_meta(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace abcond
