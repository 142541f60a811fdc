// SVG heatmap of a feasibility grid. Colour encodes sign(min_t) and
// log(1 + |min_t|), centred on zero; the feasible region is outlined.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "abcond/diagnostics.hpp"

namespace abcond {

struct HeatmapOptions {
  std::string title = "min T over records";
  bool timestamp = false;  // adds a generation-time comment line
  double cell = 4.0;       // pixels per grid cell
};

namespace detail {

/// Blue for positive, red for negative, white at zero.
inline std::string signed_colour(double v, double scale) {
  if (std::isnan(v)) return "#bbbbbb";
  if (std::isinf(v)) return v > 0 ? "#08306b" : "#67000d";
  const double m = scale > 0.0 ? std::min(std::log1p(std::abs(v)) / scale, 1.0) : 0.0;
  const int level = static_cast<int>(std::lround(m * 32.0));  // quantized so runs merge
  const double t = level / 32.0;
  int r, g, b;
  if (v >= 0.0) {
    r = static_cast<int>(std::lround(255.0 * (1.0 - 0.97 * t)));
    g = static_cast<int>(std::lround(255.0 * (1.0 - 0.81 * t)));
    b = static_cast<int>(std::lround(255.0 * (1.0 - 0.58 * t)));
  } else {
    r = static_cast<int>(std::lround(255.0 * (1.0 - 0.60 * t)));
    g = static_cast<int>(std::lround(255.0 * (1.0 - t)));
    b = static_cast<int>(std::lround(255.0 * (1.0 - 0.95 * t)));
  }
  return fmt::format("#{:02x}{:02x}{:02x}", r, g, b);
}

}  // namespace detail

/// beta runs left to right, alpha bottom to top, both in grid-index (log) spacing.
inline void write_heatmap_svg(std::ostream& out, const FeasibilityGrid& g,
                              const HeatmapOptions& opt = {}) {
  const std::size_t NA = g.alphas.size(), NB = g.betas.size();
  const double cs = opt.cell, left = 70.0, top = 40.0;
  const double W = left + NB * cs + 120.0, H = top + NA * cs + 60.0;
  double scale = 0.0;
  for (std::size_t a = 0; a < NA; ++a)
    for (std::size_t b = 0; b < NB; ++b)
      if (g.valid_at(a, b) && std::isfinite(g.min_t_at(a, b)))
        scale = std::max(scale, std::log1p(std::abs(g.min_t_at(a, b))));

  out << fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\">\n",
      W, H, W, H);
  if (opt.timestamp) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    out << "<!-- generated " << now << " -->\n";
  }
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << fmt::format("<text x=\"{:.1f}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
                     left, opt.title);
  auto cell_x = [&](std::size_t b) { return left + b * cs; };
  auto cell_y = [&](std::size_t a) { return top + (NA - 1 - a) * cs; };

  // Cells, merged into horizontal runs of equal colour.
  for (std::size_t a = 0; a < NA; ++a) {
    std::size_t b = 0;
    while (b < NB) {
      const std::string colour =
          g.valid_at(a, b) ? detail::signed_colour(g.min_t_at(a, b), scale) : "#bbbbbb";
      std::size_t e = b + 1;
      while (e < NB &&
             (g.valid_at(a, e) ? detail::signed_colour(g.min_t_at(a, e), scale) : "#bbbbbb") == colour)
        ++e;
      out << fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n",
                         cell_x(b), cell_y(a), (e - b) * cs, cs, colour);
      b = e;
    }
  }

  // Feasible-region outline along cell edges.
  std::string path;
  auto feas = [&](long a, long b) {
    return a >= 0 && b >= 0 && a < static_cast<long>(NA) && b < static_cast<long>(NB) &&
           g.feasible_at(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  };
  for (long a = 0; a < static_cast<long>(NA); ++a)
    for (long b = 0; b < static_cast<long>(NB); ++b) {
      if (!feas(a, b)) continue;
      const double x0 = cell_x(b), y0 = cell_y(a), x1 = x0 + cs, y1 = y0 + cs;
      if (!feas(a + 1, b)) path += fmt::format("M{:.1f} {:.1f}H{:.1f}", x0, y0, x1);
      if (!feas(a - 1, b)) path += fmt::format("M{:.1f} {:.1f}H{:.1f}", x0, y1, x1);
      if (!feas(a, b - 1)) path += fmt::format("M{:.1f} {:.1f}V{:.1f}", x0, y0, y1);
      if (!feas(a, b + 1)) path += fmt::format("M{:.1f} {:.1f}V{:.1f}", x1, y0, y1);
    }
  if (!path.empty())
    out << "<path d=\"" << path << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.2\"/>\n";

  // Axes with ticks at powers of ten. A leading beta = 0 column gets its own label.
  auto ticks = [&](const std::vector<double>& grid, bool horizontal) {
    const std::size_t skip = (!grid.empty() && grid.front() <= 0.0) ? 1 : 0;
    if (skip && horizontal)
      out << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\" "
                         "text-anchor=\"middle\">0</text>\n",
                         left + cs / 2, top + NA * cs + 14);
    if (grid.size() < skip + 2) return;
    const double l0 = std::log10(grid[skip]), l1 = std::log10(grid.back());
    if (!std::isfinite(l0) || !std::isfinite(l1)) return;
    const double offset = skip * cs;
    for (int p = static_cast<int>(std::ceil(l0 - 1e-9)); p <= static_cast<int>(std::floor(l1 + 1e-9)); ++p) {
      const double frac = l1 > l0 ? (p - l0) / (l1 - l0) : 0.0;
      const double span = (grid.size() - skip) * cs;
      if (horizontal) {
        const double x = left + offset + frac * (span - cs) + cs / 2;
        out << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\" "
                           "text-anchor=\"middle\">1e{}</text>\n",
                           x, top + NA * cs + 14, p);
      } else {
        const double y = top + NA * cs - offset - frac * (span - cs) - cs / 2;
        out << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\" "
                           "text-anchor=\"end\">1e{}</text>\n",
                           left - 4, y + 3, p);
      }
    }
  };
  ticks(g.betas, true);
  ticks(g.alphas, false);
  out << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "text-anchor=\"middle\">beta</text>\n",
                     left + NB * cs / 2, top + NA * cs + 32);
  out << fmt::format("<text x=\"14\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "transform=\"rotate(-90 14 {:.1f})\" text-anchor=\"middle\">alpha</text>\n",
                     top + NA * cs / 2, top + NA * cs / 2);

  // Legend.
  const double lx = left + NB * cs + 20;
  const char* labels[] = {"min T > 0", "min T = 0", "min T < 0", "masked"};
  const std::string colours[] = {detail::signed_colour(1e300, 1.0), "#ffffff",
                                 detail::signed_colour(-1e300, 1.0), "#bbbbbb"};
  for (int i = 0; i < 4; ++i) {
    out << fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"12\" height=\"12\" fill=\"{}\" stroke=\"#555\"/>\n",
                       lx, top + i * 18.0, colours[i]);
    out << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                       lx + 16, top + i * 18.0 + 10, labels[i]);
  }
  out << "</svg>\n";
}

}  // namespace abcond
