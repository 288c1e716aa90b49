#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"

int main(int argc, char** argv) {
  using namespace gpesmc::cli;
  CLI::App app{"Exact-likelihood particle smoothing and Monte-Carlo EM for diffusions"};
  app.require_subcommand(1);

  std::string config_path;
  RunOptions options;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "TOML experiment configuration")->required();
  CLI::Option* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--threads", options.threads, "worker threads")->check(CLI::PositiveNumber);
  CLI::Option* out_opt = app.add_option("--out", "primary output file (overrides the config)");
  app.add_flag("--timing", options.timing, "record wall-clock times");
  app.fallthrough();

  CLI::App* simulate = app.add_subcommand("simulate", "simulate a data set");
  CLI::App* infer = app.add_subcommand("infer", "estimate parameters by Monte-Carlo EM");
  CLI::App* check = app.add_subcommand("gpe-check", "summarise transition density estimator draws");
  CLI::App* smooth = app.add_subcommand("smooth", "draw smoothed latent paths at a fixed parameter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  if (*seed_opt) options.seed = seed;
  if (*out_opt) options.out = out_opt->as<std::string>();

  try {
    const ExperimentConfig config = load_config(config_path);
    if (simulate->parsed()) return cmd_simulate(config, options, std::cerr);
    if (infer->parsed()) return cmd_infer(config, options, std::cerr);
    if (check->parsed()) return cmd_gpe_check(config, options, std::cout);
    if (smooth->parsed()) return cmd_smooth(config, options, std::cerr);
  } catch (...) {
    return report_failure(std::cerr);
  }
  return kConfigError;
}
