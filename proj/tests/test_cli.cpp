#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "exitduel/cli.hpp"

using namespace exitduel;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("exitduel_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_binary(const std::string& args) {
  const int rc = std::system((std::string(EXITDUEL_BIN) + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("config files parse with comments and overrides") {
  const auto dir = fresh_dir("config");
  const auto path = dir / "run.cfg";
  std::ofstream(path) << "# comment line\n"
                      << "mu = -0.4\n"
                      << "seed = 777   # trailing comment\n"
                      << "eps_ladder = 0.04, 0.02, 0.01\n";
  auto cfg = RunConfig::from_file(path.string());
  REQUIRE(cfg.mu == -0.4);
  REQUIRE(cfg.seed == 777);
  REQUIRE(cfg.eps_ladder.size() == 3);
  REQUIRE(cfg.vol == 1.0);  // untouched default

  cfg.set("vol", "1.5");
  REQUIRE(cfg.vol == 1.5);
  REQUIRE_THROWS_AS(cfg.set("nope", "1"), std::invalid_argument);
  REQUIRE_THROWS_AS(cfg.set("mu", "abc"), std::invalid_argument);

  // hash tracks content
  auto h1 = cfg.hash_hex();
  cfg.set("seed", "778");
  REQUIRE(cfg.hash_hex() != h1);
}

TEST_CASE("thresholds command emits the figure data product") {
  const auto dir = fresh_dir("thresholds");
  RunConfig cfg;
  cfg.out_dir = dir.string();
  REQUIRE(cmd_thresholds(cfg) == kExitOk);

  const std::string csv = slurp(dir / "thresholds.csv");
  REQUIRE(csv.rfind("# config-hash: ", 0) == 0);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);  // hash comment
  std::getline(is, line);
  REQUIRE(line == "theta,alpha,c");
  std::size_t rows = 0;
  double prev_alpha = 0.0;
  while (std::getline(is, line)) {
    ++rows;
    double theta, alpha, c;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &theta, &alpha, &c) == 3);
    REQUIRE(alpha > prev_alpha);
    REQUIRE(c == Catch::Approx(theta * theta).epsilon(1e-9));
    prev_alpha = alpha;
  }
  REQUIRE(rows == 201);
  REQUIRE(fs::exists(dir / "report.json"));
}

TEST_CASE("simulate command output is deterministic and coherent") {
  const auto dir1 = fresh_dir("sim1");
  const auto dir2 = fresh_dir("sim2");
  RunConfig cfg;
  cfg.out_dir = dir1.string();
  REQUIRE(cmd_simulate(cfg, 1.4, 1.0, 2.72) == kExitOk);
  cfg.out_dir = dir2.string();
  REQUIRE(cmd_simulate(cfg, 1.4, 1.0, 2.72) == kExitOk);
  REQUIRE(slurp(dir1 / "simulate.csv") == slurp(dir2 / "simulate.csv"));
  REQUIRE(slurp(dir1 / "game.json") == slurp(dir2 / "game.json"));

  // Y column never increases; it only moves when X is at or below the
  // boundary (within the smoothing ramp and one-step lag)
  std::istringstream is(slurp(dir1 / "simulate.csv"));
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  double prev_x = 0, prev_y = 2.0, prev_alpha = 0;
  bool first = true;
  const double ramp_x = 0.005 * 3.2;  // eps * max slope of the boundary
  while (std::getline(is, line)) {
    double t, x, y, alpha_y;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &t, &x, &y, &alpha_y) == 4);
    if (!first) {
      REQUIRE(y <= prev_y + 1e-15);
      if (y < prev_y - 1e-15) REQUIRE(prev_x <= prev_alpha + ramp_x);
    }
    first = false;
    prev_x = x;
    prev_y = y;
    prev_alpha = alpha_y;
  }
}

TEST_CASE("simulate rejects types outside the support") {
  const auto dir = fresh_dir("sim_bad");
  RunConfig cfg;
  cfg.out_dir = dir.string();
  REQUIRE(cmd_simulate(cfg, 2.0, 1.0, 2.72) == kExitUsage);
}

TEST_CASE("audit command exit codes") {
  const auto dir = fresh_dir("audit");
  RunConfig cfg;
  cfg.out_dir = dir.string();
  cfg.n_paths = 400;

  // empty deviation set is a usage error
  REQUIRE(cmd_audit(cfg, {1.0}, 2.72, 0) == kExitUsage);

  // assumption failure aborts with code 2 before any simulation
  RunConfig bad = cfg;
  bad.m0 = 1.4;  // m0 < r * theta_hi
  REQUIRE(cmd_audit(bad, {1.0}, 2.72, 4) == kExitAssumptionFailure);

  REQUIRE(cmd_audit(cfg, {1.0}, 2.72, 4) == kExitOk);
  REQUIRE(fs::exists(dir / "audit.json"));
}

TEST_CASE("special command validates its mode") {
  const auto dir = fresh_dir("special");
  RunConfig cfg;
  cfg.out_dir = dir.string();
  REQUIRE(cmd_special(cfg, "nope", 0.0) == kExitUsage);

  REQUIRE(cmd_special(cfg, "deterministic", 0.16) == kExitOk);
  const std::string csv = slurp(dir / "special_deterministic.csv");
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  REQUIRE(line == "theta,tau_hat");
  double prev = kInf;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    double theta, tau;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf", &theta, &tau) == 2);
    REQUIRE(tau <= prev + 1e-12);
    prev = tau;
  }
  REQUIRE(rows == 201);
  REQUIRE(prev == 0.0);  // top type exits immediately
}

TEST_CASE("region command emits a labelled grid") {
  const auto dir = fresh_dir("region");
  RunConfig cfg;
  cfg.out_dir = dir.string();
  cfg.n_paths = 60;
  cfg.dt = 8e-3;
  REQUIRE(cmd_region(cfg, 1.0) == kExitOk);
  const std::string csv = slurp(dir / "region.csv");
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  REQUIRE(line == "x,a,label,v_tilde,std_error");
  std::size_t rows = 0, stops = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (line.find("STOP") != std::string::npos) ++stops;
  }
  REQUIRE(rows == 144);
  REQUIRE(stops > 0);
  REQUIRE(stops < rows);
}

TEST_CASE("binary wires commands, codes and help together") {
  const auto dir = fresh_dir("binary");
  REQUIRE(run_binary("--help") == 0);
  REQUIRE(run_binary("bogus-subcommand") == kExitUsage);
  REQUIRE(run_binary("special nope --out " + (dir / "s").string()) == kExitUsage);
  REQUIRE(run_binary("thresholds --out " + (dir / "t").string()) == kExitOk);

  // byte-identical reruns
  REQUIRE(run_binary("simulate --seed 4242 --out " + (dir / "a").string()) == kExitOk);
  REQUIRE(run_binary("simulate --seed 4242 --out " + (dir / "b").string()) == kExitOk);
  REQUIRE(slurp(dir / "a" / "simulate.csv") == slurp(dir / "b" / "simulate.csv"));
  REQUIRE(slurp(dir / "a" / "simulate.csv").find("\r") == std::string::npos);
}
