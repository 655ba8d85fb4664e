#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moghs/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-objective graph heuristic search for articulated robot designs"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run one search from a TOML config");
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algorithm, out_dir;
  run->add_option("--config", config, "run config (TOML)")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--algorithm", algorithm, "moghs | dw | random")
      ->check(CLI::IsMember({"moghs", "dw", "discrete_weights", "random"}));
  run->add_option("--out", out_dir, "run directory (default <output_dir>/<run_id>_<algorithm>_s<seed>)");

  auto* metrics = app.add_subcommand("metrics", "HV / GD / IGD over run directories");
  std::vector<std::string> metric_dirs;
  std::string report;
  metrics->add_option("dirs", metric_dirs, "run directories")->required();
  metrics->add_option("--out", report, "write the JSON report here");

  auto* plot = app.add_subcommand("plot", "SVG scatter plots of archive fronts");
  std::vector<std::string> plot_dirs;
  std::string plot_out;
  plot->add_option("dirs", plot_dirs, "run directories")->required();
  plot->add_option("--out", plot_out, "output directory")->required();

  auto* enumerate = app.add_subcommand("enumerate", "count the terminal designs of a grammar");
  std::string grammar;
  std::size_t cap = 100000;
  bool front = false;
  enumerate->add_option("--grammar", grammar, "grammar path or shipped name")->required();
  enumerate->add_option("--cap", cap, "abort beyond this many designs");
  enumerate->add_flag("--front", front, "print the design_complexity x robot_height front");

  auto* replay = app.add_subcommand("replay", "rebuild the archive from the episode log");
  std::string replay_dir, trajectory = "trajectory.jsonl";
  std::optional<std::size_t> entry;
  replay->add_option("dir", replay_dir, "run directory")->required();
  replay->add_option("--entry", entry, "re-simulate this archive entry and dump its trajectory");
  replay->add_option("--trajectory", trajectory, "trajectory output (JSON lines)");

  CLI11_PARSE(app, argc, argv);

  if (*run) return moghs::cmd_run(config, seed, algorithm, out_dir, std::cout, std::cerr);
  if (*metrics) return moghs::cmd_metrics(metric_dirs, report, std::cout, std::cerr);
  if (*plot) return moghs::cmd_plot(plot_dirs, plot_out, std::cout, std::cerr);
  if (*enumerate) return moghs::cmd_enumerate(grammar, cap, front, std::cout, std::cerr);
  if (*replay) return moghs::cmd_replay(replay_dir, entry, trajectory, std::cout, std::cerr);
  return 1;
}
