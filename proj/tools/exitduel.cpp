// Command-line front end: thresholds | simulate | audit | region | special.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "exitduel/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Exit-game equilibrium engine"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  double dt = 0.0;
  double x0 = 0.0;
  std::size_t paths = 0;
  bool seed_set = false;
  std::uint64_t seed = 0;

  app.add_option("--config", config_path, "flat key = value configuration file");
  app.add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_set = true; });
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--dt", dt, "time step");
  app.add_option("--paths", paths, "Monte-Carlo path count");
  app.add_option("--x0", x0, "initial state");

  auto* sc_thresholds = app.add_subcommand("thresholds", "emit theta, alpha(theta), c(theta)");

  double theta1 = 1.4, theta2 = 1.0;
  auto* sc_simulate = app.add_subcommand("simulate", "simulate one game realisation");
  sc_simulate->add_option("--theta", theta1, "player 1 type");
  sc_simulate->add_option("--theta2", theta2, "player 2 type");

  std::vector<double> audit_thetas;
  std::size_t n_deviations = 24;
  auto* sc_audit = app.add_subcommand("audit", "best-response audit of the equilibrium rule");
  sc_audit->add_option("--theta", audit_thetas, "types to audit (repeatable)");
  sc_audit->add_option("--deviations", n_deviations, "number of deviation rules (max 24)");

  double region_theta = 1.0;
  auto* sc_region = app.add_subcommand("region", "classify the stopping region on an (x,a) grid");
  sc_region->add_option("--theta", region_theta, "type whose region is scanned");

  std::string mode;
  auto* sc_special = app.add_subcommand("special", "limiting regimes: deterministic | degenerate");
  sc_special->add_option("mode", mode, "deterministic or degenerate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return exitduel::kExitUsage;
  }

  exitduel::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = exitduel::RunConfig::from_file(config_path);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (dt > 0) cfg.dt = dt;
    if (paths > 0) cfg.n_paths = paths;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return exitduel::kExitUsage;
  }

  try {
    if (sc_thresholds->parsed()) return exitduel::cmd_thresholds(cfg);
    if (sc_simulate->parsed())
      return exitduel::cmd_simulate(cfg, theta1, theta2, x0 > 0 ? x0 : 2.72);
    if (sc_audit->parsed())
      return exitduel::cmd_audit(cfg, audit_thetas, x0 > 0 ? x0 : 2.72, n_deviations);
    if (sc_region->parsed()) return exitduel::cmd_region(cfg, region_theta);
    if (sc_special->parsed()) return exitduel::cmd_special(cfg, mode, x0);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 70;  // internal software error
  }
  return exitduel::kExitUsage;
}
