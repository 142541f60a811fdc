// abcond: run optimizers on the built-in problems and confront the runs with
// the alpha-beta-condition and its convergence bounds.
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "abcond/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"abcond: alpha-beta-condition testbed"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool caption_sign = false, no_svg = false, svg_timestamp = false;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "experiment INI file");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
    sub->add_flag("--caption-sign", caption_sign, "use the figure-caption sign for the beta term of T");
    sub->add_flag("--no-svg", no_svg, "skip heatmap.svg");
    sub->add_flag("--svg-timestamp", svg_timestamp, "add a generation-time comment to heatmap.svg");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "run the optimizer for every seed and write trajectories");
  auto* check = app.add_subcommand("check-condition", "replay runs and write the (alpha, beta) feasibility grid");
  auto* diag = app.add_subcommand("diagnose", "aiming angles and PL log-constants along each run");
  auto* bounds = app.add_subcommand("bounds", "compare runs with the convergence bound of the rule");
  auto* repro = app.add_subcommand("reproduce", "regenerate a built-in figure experiment");
  for (auto* sub : {run, check, diag, bounds}) add_common(sub, true);
  add_common(repro, false);
  std::string figure;
  repro->add_option("figure", figure, "ex1-surface, halfspace or pl-sweep")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : abcond::kExitConfig;
  }

  abcond::CommandOptions opts;
  if (!out_dir.empty()) opts.out = out_dir;
  opts.caption_sign = caption_sign;
  opts.no_svg = no_svg;
  opts.svg_timestamp = svg_timestamp;
  opts.jobs = jobs;

  if (repro->parsed())
    return abcond::guarded([&] { return abcond::cmd_reproduce(figure, opts); }, std::cerr);

  abcond::ExperimentConfig config;
  const int rc = abcond::guarded(
      [&] {
        config = abcond::load_config_file(config_path);
        return 0;
      },
      std::cerr);
  if (rc != 0) return rc;
  for (auto* sub : {run, check, diag, bounds})
    if (sub->parsed()) return abcond::execute(sub->get_name(), config, opts);
  return abcond::kExitConfig;
}
