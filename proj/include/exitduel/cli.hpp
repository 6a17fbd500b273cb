#ifndef EXITDUEL_CLI_HPP
#define EXITDUEL_CLI_HPP

// Command implementations behind the exitduel binary: flat key=value config
// handling, deterministic CSV/JSON data products, and one function per
// subcommand. Everything here is a pure function of (config, args, seed);
// the CSV outputs of repeated runs are byte-identical.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "exitduel/best_response.hpp"
#include "exitduel/common.hpp"
#include "exitduel/diffusion.hpp"
#include "exitduel/equilibrium.hpp"
#include "exitduel/payoffs.hpp"
#include "exitduel/single_player.hpp"
#include "exitduel/special_cases.hpp"

namespace exitduel {

// Exit codes shared with the binary.
inline constexpr int kExitOk = 0;
inline constexpr int kExitAuditViolation = 1;
inline constexpr int kExitAssumptionFailure = 2;
inline constexpr int kExitUsage = 64;

struct RunConfig {
  // model
  double mu = -0.5;
  double vol = 1.0;
  double r = 1.0;
  // profit flows
  double beta = 0.5;
  double x_cap = 1000.0;
  double m0 = 2.0;
  // types
  double theta_lo = 0.5;
  double theta_hi = 1.5;
  std::string family = "uniform";
  // simulation; dt/horizon/paths of 0 mean "command default"
  double dt = 0.0;
  double horizon = 0.0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 12345;
  std::vector<double> eps_ladder{kDefaultEpsLadder.begin(), kDefaultEpsLadder.end()};
  // output
  std::string out_dir = "out";

  void set(const std::string& key, const std::string& value);
  static RunConfig from_file(const std::string& path);
  std::string canonical() const;
  std::string hash_hex() const;
};

inline std::string fmt_g(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace cli_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value for " + key + ": '" + v + "'");
  }
  if (pos != v.size())
    throw std::invalid_argument("config: trailing junk in value for " + key + ": '" + v + "'");
  return out;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
  return out;
}

}  // namespace cli_detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using cli_detail::parse_double;
  if (key == "mu") mu = parse_double(key, value);
  else if (key == "vol") vol = parse_double(key, value);
  else if (key == "r") r = parse_double(key, value);
  else if (key == "beta") beta = parse_double(key, value);
  else if (key == "x_cap") x_cap = parse_double(key, value);
  else if (key == "m0") m0 = parse_double(key, value);
  else if (key == "theta_lo") theta_lo = parse_double(key, value);
  else if (key == "theta_hi") theta_hi = parse_double(key, value);
  else if (key == "family") family = value;
  else if (key == "dt") dt = parse_double(key, value);
  else if (key == "horizon") horizon = parse_double(key, value);
  else if (key == "paths") n_paths = static_cast<std::size_t>(parse_double(key, value));
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_double(key, value));
  else if (key == "eps_ladder") eps_ladder = cli_detail::parse_list(key, value);
  else if (key == "out") out_dir = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = cli_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key = value");
    cfg.set(cli_detail::trim(line.substr(0, eq)), cli_detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline std::string RunConfig::canonical() const {
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << "=" << v << "\n"; };
  auto kvd = [&](const char* k, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    kv(k, buf);
  };
  kvd("mu", mu);
  kvd("vol", vol);
  kvd("r", r);
  kvd("beta", beta);
  kvd("x_cap", x_cap);
  kvd("m0", m0);
  kvd("theta_lo", theta_lo);
  kvd("theta_hi", theta_hi);
  kv("family", family);
  kvd("dt", dt);
  kvd("horizon", horizon);
  kv("paths", std::to_string(n_paths));
  kv("seed", std::to_string(seed));
  {
    std::string s;
    for (std::size_t i = 0; i < eps_ladder.size(); ++i) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%.17g", eps_ladder[i]);
      if (i) s += ",";
      s += buf;
    }
    kv("eps_ladder", s);
  }
  return os.str();
}

inline std::string RunConfig::hash_hex() const {
  // FNV-1a 64-bit over the canonical form.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Thrown when the configured parameters violate a standing assumption; the
// caller turns it into exit code 2.
struct AssumptionFailure : std::runtime_error {
  AssumptionReport report;
  explicit AssumptionFailure(AssumptionReport rep)
      : std::runtime_error(rep.first_failure()
                               ? "assumption failure: " + rep.first_failure()->name +
                                     " (" + rep.first_failure()->detail + ")"
                               : "assumption failure"),
        report(std::move(rep)) {}
};

inline nlohmann::json to_json(const AssumptionReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  return checks;
}

inline nlohmann::json to_json(const AuditReport& rep) {
  nlohmann::json devs = nlohmann::json::array();
  for (const auto& d : rep.deviations) {
    devs.push_back({{"rule", d.rule},
                    {"estimate", d.value.estimate},
                    {"std_error", d.value.std_error},
                    {"diff_mean", d.diff_mean},
                    {"diff_std_error", d.diff_std_error},
                    {"wins", d.wins}});
  }
  return {{"x0", rep.x0},
          {"theta", rep.theta},
          {"n_paths", rep.n_paths},
          {"significance", rep.significance},
          {"equilibrium", {{"estimate", rep.equilibrium_value.estimate},
                           {"std_error", rep.equilibrium_value.std_error}}},
          {"deviations", devs},
          {"violations", rep.violations},
          {"pass", rep.pass()}};
}

inline nlohmann::json time_json(double t) {
  if (std::isinf(t)) return "inf";
  return t;
}

// Validates the configuration and assembles the model bundle.
inline GameModel build_game(const RunConfig& cfg) {
  if (cfg.family != "uniform")
    throw std::invalid_argument("config: only the uniform type family is supported here");
  DiffusionModel model = DiffusionModel::gbm(cfg.mu, cfg.vol);
  ProfitSpec spec = ProfitSpec::example(cfg.r, cfg.beta, cfg.x_cap, cfg.m0);
  AssumptionReport rep = validate_assumptions(model, spec, cfg.theta_lo, cfg.theta_hi);
  if (!rep.all_pass()) throw AssumptionFailure(std::move(rep));
  ResolventPair res =
      ResolventPair::from_example(ExampleResolvent::build(spec, cfg.mu, cfg.vol));
  TypeDistribution dist = TypeDistribution::uniform(cfg.theta_lo, cfg.theta_hi);
  return GameModel::build(std::move(model), std::move(spec), std::move(res),
                          std::move(dist));
}

namespace cli_detail {

class RunReport {
 public:
  RunReport(std::string command, const RunConfig& cfg)
      : command_(std::move(command)),
        cfg_hash_(cfg.hash_hex()),
        start_(std::chrono::steady_clock::now()) {
    std::istringstream is(cfg.canonical());
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      config_[line.substr(0, eq)] = line.substr(eq + 1);
    }
    config_["out"] = cfg.out_dir;
  }

  void check(const std::string& name, bool pass, const std::string& detail = "") {
    checks_.push_back({{"name", name}, {"pass", pass}, {"detail", detail}});
    if (!pass) all_pass_ = false;
  }
  void checks(const AssumptionReport& rep) {
    for (const auto& c : rep.checks) check("assumption/" + c.name, c.pass, c.detail);
  }
  void output(const std::string& path) { outputs_.push_back(path); }
  bool all_pass() const { return all_pass_; }

  void write(const std::filesystem::path& dir, int exit_code) const {
    nlohmann::json j{{"command", command_},
                     {"config", config_},
                     {"config_hash", cfg_hash_},
                     {"checks", checks_},
                     {"outputs", outputs_},
                     {"exit_code", exit_code}};
    j["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(dir / "report.json");
    out << j.dump(2) << "\n";
  }

 private:
  std::string command_;
  std::string cfg_hash_;
  std::map<std::string, std::string> config_;
  nlohmann::json checks_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
  bool all_pass_ = true;
  std::chrono::steady_clock::time_point start_;
};

inline std::ofstream open_csv(const std::filesystem::path& path,
                              const RunConfig& cfg, const std::string& header) {
  std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
  if (!out) throw std::runtime_error("cannot open output file " + path.string());
  out << "# config-hash: " << cfg.hash_hex() << "\n" << header << "\n";
  return out;
}

inline int finish(const RunReport& report, const std::filesystem::path& dir,
                  int code) {
  report.write(dir, code);
  return code;
}

}  // namespace cli_detail

// theta, alpha(theta), c(theta) on the support grid.
inline int cmd_thresholds(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  cli_detail::RunReport report("thresholds", cfg);
  try {
    GameModel game = build_game(cfg);
    report.checks(validate_assumptions(game.model, game.spec, cfg.theta_lo, cfg.theta_hi));
    auto thetas = game.table.thetas();
    auto alphas = game.table.alphas();
    auto out = cli_detail::open_csv(dir / "thresholds.csv", cfg, "theta,alpha,c");
    bool increasing = true;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
      if (i > 0 && !(alphas[i] > alphas[i - 1])) increasing = false;
      out << fmt_g(thetas[i]) << "," << fmt_g(alphas[i]) << ","
          << fmt_g(c_critical(thetas[i], game.spec)) << "\n";
    }
    report.output((dir / "thresholds.csv").string());
    report.check("alpha_strictly_increasing", increasing);
    return cli_detail::finish(report, dir, report.all_pass() ? kExitOk : kExitAssumptionFailure);
  } catch (const AssumptionFailure& e) {
    report.checks(e.report);
    std::fprintf(stderr, "%s\n", e.what());
    return cli_detail::finish(report, dir, kExitAssumptionFailure);
  }
}

// One game realisation: the (t, X, Y, alpha(Y)) track and the outcome.
inline int cmd_simulate(const RunConfig& cfg, double theta1, double theta2,
                        double x0) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  cli_detail::RunReport report("simulate", cfg);
  if (!(theta1 >= cfg.theta_lo && theta1 <= cfg.theta_hi &&
        theta2 >= cfg.theta_lo && theta2 <= cfg.theta_hi)) {
    std::fprintf(stderr, "simulate: player types must lie in [theta_lo, theta_hi]\n");
    return cli_detail::finish(report, dir, kExitUsage);
  }
  try {
    GameModel game = build_game(cfg);
    const double dt = cfg.dt > 0 ? cfg.dt : 1e-3;
    const double horizon = cfg.horizon > 0 ? cfg.horizon : 2.0;

    const auto n_steps = static_cast<std::size_t>(std::llround(horizon / dt));
    NoiseGrid noise(cfg.seed, dt, n_steps);
    SamplePath path = simulate_path(game.model, x0, noise.horizon(), noise, 0);
    BeliefPath belief = integrate_belief(game, path, 0.0, cfg.eps_ladder);

    auto out = cli_detail::open_csv(dir / "simulate.csv", cfg, "t,X,Y,alpha_of_Y");
    for (std::size_t k = 0; k < path.times.size(); ++k) {
      const double y = game.dist.big_y(belief.a_values[k]);
      out << fmt_g(path.times[k]) << "," << fmt_g(path.states[k]) << ","
          << fmt_g(y) << "," << fmt_g(game.table.alpha(y)) << "\n";
    }
    report.output((dir / "simulate.csv").string());

    GameOutcome o = simulate_game(game, x0, theta1, theta2, cfg.seed, horizon, dt,
                                  cfg.eps_ladder);
    const char* first = o.first_exiter == FirstExiter::One    ? "1"
                        : o.first_exiter == FirstExiter::Two  ? "2"
                        : o.first_exiter == FirstExiter::Both ? "both"
                                                              : "none";
    nlohmann::json j{{"x0", x0},
                     {"theta1", theta1},
                     {"theta2", theta2},
                     {"seed", cfg.seed},
                     {"exit_time_1", time_json(o.exit_time_1)},
                     {"exit_time_2", time_json(o.exit_time_2)},
                     {"payoff_1", o.payoff_1},
                     {"payoff_2", o.payoff_2},
                     {"first_exiter", first},
                     {"belief_converged", belief.converged}};
    std::ofstream(dir / "game.json") << j.dump(2) << "\n";
    report.output((dir / "game.json").string());
    report.check("belief_converged", belief.converged);
    return cli_detail::finish(report, dir, report.all_pass() ? kExitOk : kExitAuditViolation);
  } catch (const AssumptionFailure& e) {
    report.checks(e.report);
    std::fprintf(stderr, "%s\n", e.what());
    return cli_detail::finish(report, dir, kExitAssumptionFailure);
  }
}

// Paired deviation audit at each requested type.
inline int cmd_audit(const RunConfig& cfg, std::vector<double> thetas, double x0,
                     std::size_t n_deviations) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  cli_detail::RunReport report("audit", cfg);
  if (thetas.empty()) thetas = {0.6, 1.0, 1.4};
  if (n_deviations == 0) {
    std::fprintf(stderr, "audit: empty deviation set\n");
    return cli_detail::finish(report, dir, kExitUsage);
  }
  try {
    GameModel game = build_game(cfg);
    AuditOptions opts;
    opts.dt = cfg.dt > 0 ? cfg.dt : 1e-3;
    opts.horizon = cfg.horizon;  // 0 lets the tail bound pick it
    opts.seed = cfg.seed;
    opts.eps_ladder = cfg.eps_ladder;
    const std::size_t n_paths = cfg.n_paths > 0 ? cfg.n_paths : 100000;

    nlohmann::json audits = nlohmann::json::array();
    bool any_violation = false;
    const auto reports = audit_best_response_multi(game, x0, thetas, n_paths,
                                                   3.0, opts, n_deviations);
    for (const auto& rep : reports) {
      any_violation = any_violation || !rep.pass();
      report.check("audit/theta=" + fmt_g(rep.theta), rep.pass(),
                   std::to_string(rep.violations.size()) + " winning deviations");
      audits.push_back(to_json(rep));
    }
    std::ofstream(dir / "audit.json") << audits.dump(2) << "\n";
    report.output((dir / "audit.json").string());
    return cli_detail::finish(report, dir, any_violation ? kExitAuditViolation : kExitOk);
  } catch (const AssumptionFailure& e) {
    report.checks(e.report);
    std::fprintf(stderr, "%s\n", e.what());
    return cli_detail::finish(report, dir, kExitAssumptionFailure);
  }
}

// STOP/CONTINUE classification over an (x, a) grid.
inline int cmd_region(const RunConfig& cfg, double theta) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  cli_detail::RunReport report("region", cfg);
  try {
    GameModel game = build_game(cfg);
    RegionOptions opts;
    opts.dt = cfg.dt > 0 ? cfg.dt : 2e-3;
    if (cfg.horizon > 0) opts.horizon = cfg.horizon;
    opts.n_paths = cfg.n_paths > 0 ? cfg.n_paths : 2000;
    opts.seed = cfg.seed;
    opts.eps_ladder = cfg.eps_ladder;
    const auto x_grid = default_region_x_grid(game, theta);
    const auto a_grid = default_region_a_grid(game, theta);
    const auto cells = classify_region(game, theta, x_grid, a_grid, opts);

    auto out = cli_detail::open_csv(dir / "region.csv", cfg,
                                    "x,a,label,v_tilde,std_error");
    for (const auto& c : cells)
      out << fmt_g(c.x) << "," << fmt_g(c.a) << ","
          << (c.label == CellLabel::Stop ? "STOP" : "CONTINUE") << ","
          << fmt_g(c.v_tilde) << "," << fmt_g(c.std_error) << "\n";
    report.output((dir / "region.csv").string());
    report.check("region_cells", cells.size() == x_grid.size() * a_grid.size());
    return cli_detail::finish(report, dir, report.all_pass() ? kExitOk : kExitAuditViolation);
  } catch (const AssumptionFailure& e) {
    report.checks(e.report);
    std::fprintf(stderr, "%s\n", e.what());
    return cli_detail::finish(report, dir, kExitAssumptionFailure);
  }
}

// Limiting regimes: the deterministic exit schedule or the shrinking-support
// mixed-strategy comparison.
inline int cmd_special(const RunConfig& cfg, const std::string& mode, double x0) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  cli_detail::RunReport report("special", cfg);
  if (mode != "deterministic" && mode != "degenerate") {
    std::fprintf(stderr, "special: unknown mode '%s'\n", mode.c_str());
    return cli_detail::finish(report, dir, kExitUsage);
  }
  try {
    GameModel game = build_game(cfg);
    if (mode == "deterministic") {
      const double x_fixed = x0 > 0 ? x0 : 0.16;
      DeterministicSchedule sched = deterministic_schedule(
          x_fixed, game.dist, game.res, game.spec, 1e-4);
      auto out = cli_detail::open_csv(dir / "special_deterministic.csv", cfg,
                                      "theta,tau_hat");
      bool nonincreasing = true;
      for (std::size_t i = 0; i < sched.thetas.size(); ++i) {
        if (i > 0 && sched.exit_times[i] > sched.exit_times[i - 1] + 1e-12)
          nonincreasing = false;
        out << fmt_g(sched.thetas[i]) << "," << fmt_g(sched.exit_times[i]) << "\n";
      }
      report.output((dir / "special_deterministic.csv").string());
      report.check("schedule_nonincreasing", nonincreasing);
    } else {
      DegenerateLimitOptions opts;
      if (x0 > 0) opts.x0 = x0;
      if (cfg.dt > 0) opts.dt = cfg.dt;
      if (cfg.horizon > 0) opts.horizon = cfg.horizon;
      if (cfg.n_paths > 0) opts.n_paths = cfg.n_paths;
      opts.seed = cfg.seed;
      opts.eps_ladder = cfg.eps_ladder;
      const double theta = 0.5 * (cfg.theta_lo + cfg.theta_hi);
      const std::vector<double> hs{0.25, 0.1, 0.05};
      const auto points = degenerate_limit_ks(game, theta, hs, opts);
      auto out = cli_detail::open_csv(dir / "special_degenerate.csv", cfg, "h,ks");
      bool decreasing = true;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (i > 0 && !(points[i].ks < points[i - 1].ks)) decreasing = false;
        out << fmt_g(points[i].h) << "," << fmt_g(points[i].ks) << "\n";
      }
      report.output((dir / "special_degenerate.csv").string());
      report.check("ks_decreasing_in_h", decreasing);
    }
    return cli_detail::finish(report, dir, report.all_pass() ? kExitOk : kExitAuditViolation);
  } catch (const AssumptionFailure& e) {
    report.checks(e.report);
    std::fprintf(stderr, "%s\n", e.what());
    return cli_detail::finish(report, dir, kExitAssumptionFailure);
  }
}

}  // namespace exitduel

#endif  // EXITDUEL_CLI_HPP
