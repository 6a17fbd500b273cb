#ifndef EXITDUEL_SPECIAL_CASES_HPP
#define EXITDUEL_SPECIAL_CASES_HPP

// Two limiting regimes of the exit game: the frozen-state deterministic game,
// where each type exits at a deterministic time read off one ODE solution,
// and the degenerate-type limit, where the equilibrium looks like a mixed
// strategy driven by an accumulated hazard and a uniform randomisation draw.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "exitduel/common.hpp"
#include "exitduel/diffusion.hpp"
#include "exitduel/equilibrium.hpp"

namespace exitduel {

struct DeterministicSchedule {
  std::vector<double> thetas;
  std::vector<double> exit_times;  // nonincreasing in theta
  double x_fixed = 0.0;
};

// Frozen state: with D(x)/r < theta_lo every remaining type keeps a positive
// exit rate, so A solves a smooth scalar ODE and tau_hat(theta) is the
// crossing time of the level A(theta). Classic RK4 with crossing times
// interpolated inside the step.
inline DeterministicSchedule deterministic_schedule(double x_fixed,
                                                    const TypeDistribution& dist,
                                                    const ResolventPair& res,
                                                    const ProfitSpec& spec,
                                                    double dt,
                                                    std::size_t n_thetas = 201) {
  if (!(dt > 0.0)) throw std::invalid_argument("deterministic_schedule: dt must be > 0");
  if (!(spec.duopoly(x_fixed) / spec.r() < dist.theta_lo()))
    throw std::invalid_argument(
        "deterministic_schedule: requires D(x)/r < theta_lo; some types would never exit");

  const double d_flow = spec.duopoly(x_fixed);
  const double m_val = res.m(x_fixed);
  const double r = spec.r();
  auto rate = [&](double a) {
    const double y = dist.big_y(a);
    return (r * y - d_flow) / (m_val - y);
  };

  DeterministicSchedule sched;
  sched.x_fixed = x_fixed;
  const double lo = dist.theta_lo();
  const double hi = dist.theta_hi();
  sched.thetas.resize(n_thetas);
  sched.exit_times.assign(n_thetas, kInf);
  // Grid over (theta_lo, theta_hi]: the bottom type has A(theta_lo) = inf and
  // never exits, so the grid starts one spacing above it.
  for (std::size_t i = 0; i < n_thetas; ++i)
    sched.thetas[i] =
        lo + (hi - lo) * static_cast<double>(i + 1) / static_cast<double>(n_thetas);

  std::vector<double> levels(n_thetas);
  for (std::size_t i = 0; i < n_thetas; ++i)
    levels[i] = dist.big_a(sched.thetas[i]);

  // Highest level first to cross is the last grid entry (A decreasing in
  // theta); walk the pointer down as levels are crossed.
  std::size_t next = n_thetas;  // index+1 of the next level to cross
  double a = 0.0;
  double t = 0.0;
  while (next > 0 && levels[next - 1] <= a) {
    sched.exit_times[next - 1] = 0.0;
    --next;
  }
  const double t_max = 1e7;
  while (next > 0 && t < t_max) {
    const double k1 = rate(a);
    const double k2 = rate(a + 0.5 * dt * k1);
    const double k3 = rate(a + 0.5 * dt * k2);
    const double k4 = rate(a + dt * k3);
    const double a_next = a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    while (next > 0 && levels[next - 1] < a_next) {
      const double w = (levels[next - 1] - a) / (a_next - a);
      sched.exit_times[next - 1] = t + w * dt;
      --next;
    }
    a = a_next;
    t += dt;
  }
  return sched;
}

// Mixed-strategy exit for a degenerate type: accumulate the hazard
// lambda(X_t, theta) along the path and exit when the survival factor drops
// below the private uniform draw. Returns +inf when that never happens on
// the grid.
inline double mixed_strategy_exit(const GameModel& game, const SamplePath& path,
                                  double theta, double uniform_draw) {
  if (!(uniform_draw > 0.0 && uniform_draw < 1.0))
    throw std::invalid_argument("mixed_strategy_exit: uniform_draw must lie in (0, 1)");
  const double level = -std::log(uniform_draw);
  const double dt = path.times[1] - path.times[0];
  double a = 0.0;
  for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
    a += game.lambda(path.states[k], theta) * dt;
    if (a > level) return path.times[k + 1];
  }
  return kInf;
}

// Two-sample Kolmogorov-Smirnov distance; +inf entries count as mass beyond
// every finite time.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double ks = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    if (t == kInf) break;
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    ks = std::max(ks, std::abs(static_cast<double>(i) / na -
                               static_cast<double>(j) / nb));
  }
  return ks;
}

struct KsPoint {
  double h = 0.0;
  double ks = 0.0;
};

struct DegenerateLimitOptions {
  double x0 = 2.72;
  double dt = 1e-3;
  double horizon = 6.0;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 12345;
  std::span<const double> eps_ladder = kDefaultEpsLadder;
};

// Shrinking-support comparison: for each half-width h, play the full game
// with types uniform on [theta-h, theta+h] and compare the exit-time law
// against the mixed-strategy limit at the point type. Both sides share the
// state paths and the uniform draws, so the KS distance isolates the
// strategy difference.
inline std::vector<KsPoint> degenerate_limit_ks(const GameModel& game,
                                                double theta,
                                                std::span<const double> h_values,
                                                const DegenerateLimitOptions& opts = {}) {
  const auto n_steps = static_cast<std::size_t>(std::ceil(opts.horizon / opts.dt));
  NoiseGrid noise(opts.seed, opts.dt, n_steps);
  constexpr std::uint64_t kDrawTag = 0x64726177;

  std::vector<KsPoint> out;
  for (double h : h_values) {
    GameModel game_h{game.model, game.spec, game.res, game.table,
                     TypeDistribution::uniform(theta - h, theta + h)};
    if (!(game_h.res.m_min() > game_h.dist.theta_hi()))
      throw std::invalid_argument("degenerate_limit_ks: support exceeds the monopoly floor");

    std::vector<double> game_exits(opts.n_paths);
    std::vector<double> mixed_exits(opts.n_paths);
    const std::size_t n_blocks = (opts.n_paths + kBlock - 1) / kBlock;
    for_each_block(opts.n_paths, kBlock, [&](std::size_t, std::size_t begin,
                                             std::size_t end) {
      std::vector<double> z(n_steps);
      SamplePath path;
      path.times = noise.time_grid();
      path.states.resize(n_steps + 1);
      for (std::size_t i = begin; i < end; ++i) {
        noise.fill(i, z);
        simulate_states(game.model, opts.x0, opts.dt, z, path.states);
        auto rng = substream(opts.seed, kDrawTag, i);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double u = unif(rng);
        while (u <= 0.0 || u >= 1.0) u = unif(rng);

        BeliefPath belief = integrate_belief(game_h, path, 0.0, opts.eps_ladder);
        const double theta_i = game_h.dist.quantile(u);
        game_exits[i] =
            exit_time(theta_i, belief, path, game_h.dist, game_h.table).tau_a;
        mixed_exits[i] = mixed_strategy_exit(game, path, theta, u);
      }
    });
    out.push_back({h, ks_distance(game_exits, mixed_exits)});
  }
  return out;
}

}  // namespace exitduel

#endif  // EXITDUEL_SPECIAL_CASES_HPP
