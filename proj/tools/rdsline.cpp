#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rdsline/cli.hpp"

int main(int argc, char** argv) {
  rdsline::CliOptions opt;
  if (const char* env = std::getenv("RDSLINE_WORKERS")) {
    try {
      opt.workers = static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
      std::cerr << "RDSLINE_WORKERS must be a positive integer\n";
      return rdsline::kExitConfig;
    }
  }

  CLI::App app{"Random dynamical systems on the real line"};
  app.require_subcommand(1, 1);
  std::vector<double> window;
  std::uint64_t seed = 0, trials = 0, horizon = 0, steps = 0;
  double escape = 0;
  std::string variant;

  for (const char* name : {"check", "phi", "classify", "measure", "monster"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory")->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--workers", opt.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--trials", trials, "Monte Carlo trials per point")->check(CLI::PositiveNumber);
    sub->add_option("--horizon", horizon, "steps per trajectory")->check(CLI::PositiveNumber);
    sub->add_option("--escape", escape, "escape threshold M")->check(CLI::PositiveNumber);
    sub->add_option("--window", window, "window A B")->expected(2);
    sub->add_option("--variant", variant, "monster variant: alternating or symmetric");
    sub->add_option("--steps", steps, "monster steps per run")->check(CLI::PositiveNumber);
    sub->add_flag("--plot", opt.plot, "also write SVG plots");
    sub->add_flag("--verify", opt.verify, "run twice and compare all artifacts");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : rdsline::kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  opt.command = sub->get_name();
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--trials")) opt.trials = trials;
  if (sub->count("--horizon")) opt.horizon = horizon;
  if (sub->count("--escape")) opt.escape = escape;
  if (sub->count("--steps")) opt.steps = steps;
  if (sub->count("--variant")) opt.variant = variant;
  if (sub->count("--window")) {
    if (!(window[0] < window[1])) {
      std::cerr << "--window needs A < B\n";
      return rdsline::kExitConfig;
    }
    opt.window = rdsline::Interval{window[0], window[1]};
  }
  return rdsline::run_cli(opt, std::cerr);
}
