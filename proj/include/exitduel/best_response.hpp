#ifndef EXITDUEL_BEST_RESPONSE_HPP
#define EXITDUEL_BEST_RESPONSE_HPP

// Monte-Carlo best-response machinery: stopping rules on the (X, A) grid,
// the two equivalent payoff estimators (opponent type sampled vs integrated
// out), paired common-random-number audits of the equilibrium rule, and
// empirical recovery of the rectangular stopping region.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "exitduel/common.hpp"
#include "exitduel/diffusion.hpp"
#include "exitduel/equilibrium.hpp"
#include "exitduel/payoffs.hpp"
#include "exitduel/single_player.hpp"

namespace exitduel {

struct ImmediateRule {};
struct NeverRule {};
struct RectRule {
  double x_thresh;
  double a_thresh;
};
struct SinglePlayerRule {
  double theta;
};
struct StoppingRuleT;
struct TimeShiftRule {
  std::shared_ptr<const StoppingRuleT> base;
  double delay;
};

struct StoppingRuleT
    : std::variant<ImmediateRule, NeverRule, RectRule, SinglePlayerRule,
                   TimeShiftRule> {
  using variant::variant;
};
using StoppingRule = StoppingRuleT;

inline StoppingRule time_shift(StoppingRule base, double delay) {
  return TimeShiftRule{std::make_shared<const StoppingRule>(std::move(base)), delay};
}

inline std::string describe(const StoppingRule& rule) {
  std::ostringstream os;
  os.precision(6);
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, ImmediateRule>) {
          os << "immediate";
        } else if constexpr (std::is_same_v<T, NeverRule>) {
          os << "never";
        } else if constexpr (std::is_same_v<T, RectRule>) {
          os << "rect(x=" << r.x_thresh << ",a=" << r.a_thresh << ")";
        } else if constexpr (std::is_same_v<T, SinglePlayerRule>) {
          os << "single_player(theta=" << r.theta << ")";
        } else {
          os << "shift(" << describe(*r.base) << ",delay=" << r.delay << ")";
        }
      },
      rule);
  return os.str();
}

// First grid index at which the rule stops on this (X, A) pair, or
// kNeverIndex. Deterministic and grid-aligned by construction.
inline std::size_t stop_index(const StoppingRule& rule,
                              std::span<const double> states,
                              std::span<const double> a_values, double dt,
                              const ThresholdTable& table) {
  return std::visit(
      [&](const auto& r) -> std::size_t {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, ImmediateRule>) {
          return 0;
        } else if constexpr (std::is_same_v<T, NeverRule>) {
          return kNeverIndex;
        } else if constexpr (std::is_same_v<T, RectRule>) {
          // A is nondecreasing: jump to the first index past the a-threshold,
          // then wait for the state to dip below the x-threshold.
          const auto start = std::lower_bound(a_values.begin(), a_values.end(),
                                              r.a_thresh) -
                             a_values.begin();
          for (std::size_t k = static_cast<std::size_t>(start);
               k < states.size(); ++k)
            if (states[k] <= r.x_thresh) return k;
          return kNeverIndex;
        } else if constexpr (std::is_same_v<T, SinglePlayerRule>) {
          const double level = table.alpha(r.theta);
          for (std::size_t k = 0; k < states.size(); ++k)
            if (states[k] <= level) return k;
          return kNeverIndex;
        } else {
          const std::size_t base = stop_index(*r.base, states, a_values, dt, table);
          if (base == kNeverIndex) return kNeverIndex;
          const auto shift =
              static_cast<std::size_t>(std::ceil(r.delay / dt - 1e-12));
          const std::size_t k = base + shift;
          return k < states.size() ? k : kNeverIndex;
        }
      },
      rule);
}

// Crude bound on any payoff value: sup m + sup D / r. Used for horizon
// truncation checks.
inline double value_scale_bound(const GameModel& game) {
  const double d_sup = game.spec.duopoly_sup() / game.spec.r();
  double m_sup;
  if (game.spec.has_example_family()) {
    m_sup = d_sup + game.spec.m0() / game.spec.r();
  } else {
    m_sup = game.res.m(1e6) + d_sup;  // probe; custom models supply long horizons anyway
  }
  return m_sup + d_sup;
}

inline double horizon_for_tail(const GameModel& game, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("horizon_for_tail: tol must be > 0");
  return std::log(value_scale_bound(game) / tol) / game.spec.r();
}

namespace detail {

// Per-path arrays shared by every rule evaluated on the same draw.
struct PayoffPathData {
  std::vector<double> z;
  std::vector<double> states;
  std::vector<double> a;        // belief from the run's a0
  std::vector<double> scratch;
  std::vector<double> survival;  // e^{-A_k}
  std::vector<double> flow_disc;      // prefix of e^{-rt} D dt (trapezoid)
  std::vector<double> flow_weighted;  // prefix of e^{-rt-A} D dt
  std::vector<double> monop_weighted;  // prefix of e^{-rt-A} m dA
  PathCache cache;

  void resize(std::size_t n_steps) {
    z.resize(n_steps);
    states.resize(n_steps + 1);
    a.resize(n_steps + 1);
    survival.resize(n_steps + 1);
    flow_disc.resize(n_steps + 1);
    flow_weighted.resize(n_steps + 1);
    monop_weighted.resize(n_steps + 1);
  }
};

// Simulate path i, integrate the belief from a0 and build the prefix
// integrals both estimators read from.
inline void prepare_path(const GameModel& game, const NoiseGrid& noise,
                         std::size_t path_index, double x0, double a0,
                         std::span<const double> eps_ladder,
                         std::span<const double> discount,
                         PayoffPathData& p) {
  const std::size_t n_steps = noise.n_steps();
  const double dt = noise.step();
  p.resize(n_steps);
  noise.fill(path_index, p.z);
  simulate_states(game.model, x0, dt, p.z, p.states);
  p.cache.build(game, p.states);
  run_eps_ladder(game, p.cache, a0, eps_ladder, dt, p.a, p.scratch);
  for (std::size_t k = 0; k <= n_steps; ++k) p.survival[k] = std::exp(-p.a[k]);

  p.flow_disc[0] = 0.0;
  p.flow_weighted[0] = 0.0;
  p.monop_weighted[0] = 0.0;
  double prev_fd = discount[0] * p.cache.flow[0];
  double prev_fw = prev_fd * p.survival[0];
  double prev_mw = discount[0] * p.survival[0] * p.cache.monopoly[0];
  for (std::size_t k = 1; k <= n_steps; ++k) {
    const double fd = discount[k] * p.cache.flow[k];
    const double fw = fd * p.survival[k];
    const double mw = discount[k] * p.survival[k] * p.cache.monopoly[k];
    p.flow_disc[k] = p.flow_disc[k - 1] + 0.5 * (prev_fd + fd) * dt;
    p.flow_weighted[k] = p.flow_weighted[k - 1] + 0.5 * (prev_fw + fw) * dt;
    p.monop_weighted[k] =
        p.monop_weighted[k - 1] + 0.5 * (prev_mw + mw) * (p.a[k] - p.a[k - 1]);
    prev_fd = fd;
    prev_fw = fw;
    prev_mw = mw;
  }
}

// Integrated estimator: flow and monopoly terms weighted by e^{-rs-A_s},
// exit value weighted by the survival factor at the stop.
inline double integrated_value(const PayoffPathData& p,
                               std::span<const double> discount, double theta,
                               std::size_t sigma) {
  if (sigma == kNeverIndex) {
    const std::size_t last = p.a.size() - 1;
    return p.flow_weighted[last] + p.monop_weighted[last];
  }
  return p.flow_weighted[sigma] + p.monop_weighted[sigma] +
         theta * discount[sigma] * p.survival[sigma];
}

// Sampled estimator: the literal game payoff against an opponent exit index.
inline double sampled_value(const GameModel& game, const PayoffPathData& p,
                            std::span<const double> discount, double theta,
                            std::size_t sigma, std::size_t tau_opp) {
  const std::size_t k_min = std::min(sigma, tau_opp);
  if (k_min == kNeverIndex) return p.flow_disc[p.a.size() - 1];
  double value = p.flow_disc[k_min];
  if (sigma <= tau_opp) {
    value += discount[sigma] * theta;
  } else {
    value += discount[tau_opp] * game.res.m(p.states[tau_opp]);
  }
  return value;
}

inline std::size_t opponent_exit_index(const GameModel& game,
                                       const PayoffPathData& p,
                                       double theta_opp) {
  const double level = game.dist.big_a(theta_opp);
  if (level == kInf) return kNeverIndex;
  return first_rect_index(p.a, p.states, level, game.table.alpha(theta_opp));
}

inline constexpr std::uint64_t kOpponentTag = 0x6f707031;

}  // namespace detail

struct PayoffOptions {
  std::span<const double> eps_ladder = kDefaultEpsLadder;
  double tail_tol = 1e-3;
};

// Best-response payoff with the opponent integrated out: run from (x0, a0),
// stop at the rule's time, collect the survival-weighted flow, exit value
// and monopoly jump terms.
inline McEstimate payoff_integrated(const GameModel& game, double x0, double a0,
                                    const StoppingRule& rule, double theta,
                                    std::size_t n_paths, const NoiseGrid& noise,
                                    PayoffOptions opts = {}) {
  const double bound = value_scale_bound(game) *
                       std::exp(-game.spec.r() * noise.horizon() - a0);
  if (bound >= opts.tail_tol)
    throw std::invalid_argument("payoff_integrated: horizon too small for the tail tolerance");

  const std::size_t n_steps = noise.n_steps();
  const double dt = noise.step();
  std::vector<double> discount(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k)
    discount[k] = std::exp(-game.spec.r() * dt * static_cast<double>(k));

  const std::size_t n_blocks = (n_paths + kBlock - 1) / kBlock;
  std::vector<McAccumulator> acc(n_blocks);
  for_each_block(n_paths, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    detail::PayoffPathData p;
    McAccumulator local;
    for (std::size_t i = begin; i < end; ++i) {
      detail::prepare_path(game, noise, i, x0, a0, opts.eps_ladder, discount, p);
      const std::size_t sigma = stop_index(rule, p.states, p.a, dt, game.table);
      local.add(detail::integrated_value(p, discount, theta, sigma));
    }
    acc[b] = local;
  });
  McAccumulator total;
  for (const auto& a : acc) total.merge(a);
  return total.estimate();
}

// Direct game payoff: draw the opponent's type, let it follow the
// equilibrium exit rule on the shared belief path, and score the rule
// against it.
inline McEstimate payoff_sampled(const GameModel& game, double x0,
                                 const StoppingRule& rule, double theta,
                                 std::size_t n_paths, const NoiseGrid& noise,
                                 PayoffOptions opts = {}) {
  const double bound =
      value_scale_bound(game) * std::exp(-game.spec.r() * noise.horizon());
  if (bound >= opts.tail_tol)
    throw std::invalid_argument("payoff_sampled: horizon too small for the tail tolerance");

  const std::size_t n_steps = noise.n_steps();
  const double dt = noise.step();
  std::vector<double> discount(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k)
    discount[k] = std::exp(-game.spec.r() * dt * static_cast<double>(k));

  const std::size_t n_blocks = (n_paths + kBlock - 1) / kBlock;
  std::vector<McAccumulator> acc(n_blocks);
  for_each_block(n_paths, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    detail::PayoffPathData p;
    McAccumulator local;
    for (std::size_t i = begin; i < end; ++i) {
      detail::prepare_path(game, noise, i, x0, 0.0, opts.eps_ladder, discount, p);
      auto rng = substream(noise.seed(), detail::kOpponentTag, i);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      const double theta_opp = game.dist.quantile(unif(rng));
      const std::size_t tau_opp = detail::opponent_exit_index(game, p, theta_opp);
      const std::size_t sigma = stop_index(rule, p.states, p.a, dt, game.table);
      local.add(detail::sampled_value(game, p, discount, theta, sigma, tau_opp));
    }
    acc[b] = local;
  });
  McAccumulator total;
  for (const auto& a : acc) total.merge(a);
  return total.estimate();
}

struct DeviationResult {
  std::string rule;
  McEstimate value;
  double diff_mean = 0.0;       // deviation minus equilibrium, same paths
  double diff_std_error = 0.0;
  bool wins = false;
};

struct AuditReport {
  double x0 = 0.0;
  double theta = 0.0;
  double significance = 3.0;
  std::size_t n_paths = 0;
  McEstimate equilibrium_value;
  std::vector<DeviationResult> deviations;
  std::vector<std::string> violations;

  bool pass() const { return violations.empty(); }
};

struct AuditOptions {
  double dt = 1e-3;
  double horizon = 0.0;  // 0 = derive from tail_tol
  std::uint64_t seed = 12345;
  std::span<const double> eps_ladder = kDefaultEpsLadder;
  double tail_tol = 1e-3;
};

// Default deviation family around the equilibrium rectangle: scaled
// rectangle corners, immediate and never exit, delayed copies of the
// equilibrium rule, the single-player threshold rule, and a deep-belief
// rectangle. 24 rules in total.
inline std::vector<StoppingRule> default_deviations(const GameModel& game,
                                                    double theta) {
  const double al = game.table.alpha(theta);
  const double lv = game.dist.big_a(theta);
  std::vector<StoppingRule> rules;
  rules.reserve(24);
  for (double fx : {0.7, 0.8, 0.9, 1.1, 1.2, 1.3})
    for (double fa : {0.8, 1.0, 1.2})
      rules.push_back(RectRule{fx * al, fa * lv});
  rules.push_back(ImmediateRule{});
  rules.push_back(NeverRule{});
  rules.push_back(time_shift(RectRule{al, lv}, 0.05));
  rules.push_back(time_shift(RectRule{al, lv}, 0.2));
  rules.push_back(SinglePlayerRule{theta});
  rules.push_back(RectRule{al, 2.0 * lv});
  return rules;
}

namespace detail {

struct PairAccumulator {
  McAccumulator value;
  McAccumulator diff;
};

struct AuditTask {
  double theta;
  StoppingRule equilibrium;
  std::vector<StoppingRule> deviations;
};

inline std::vector<AuditReport> run_audit(const GameModel& game, double x0,
                                          std::span<const AuditTask> tasks,
                                          std::size_t n_paths,
                                          double significance,
                                          const AuditOptions& opts) {
  double horizon = opts.horizon;
  if (horizon <= 0.0) horizon = horizon_for_tail(game, opts.tail_tol);
  const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / opts.dt));
  NoiseGrid noise(opts.seed, opts.dt, n_steps);

  std::vector<double> discount(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k)
    discount[k] = std::exp(-game.spec.r() * opts.dt * static_cast<double>(k));

  struct BlockAcc {
    std::vector<McAccumulator> eq;          // per task
    std::vector<PairAccumulator> dev;       // per task x deviation, flattened
  };
  std::vector<std::size_t> dev_offset(tasks.size() + 1, 0);
  for (std::size_t t = 0; t < tasks.size(); ++t)
    dev_offset[t + 1] = dev_offset[t] + tasks[t].deviations.size();
  const std::size_t n_dev_total = dev_offset.back();

  const std::size_t n_blocks = (n_paths + kBlock - 1) / kBlock;
  std::vector<BlockAcc> blocks(n_blocks);

  for_each_block(n_paths, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    BlockAcc acc;
    acc.eq.resize(tasks.size());
    acc.dev.resize(n_dev_total);
    PayoffPathData p;
    for (std::size_t i = begin; i < end; ++i) {
      prepare_path(game, noise, i, x0, 0.0, opts.eps_ladder, discount, p);
      auto rng = substream(noise.seed(), kOpponentTag, i);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      const double theta_opp = game.dist.quantile(unif(rng));
      const std::size_t tau_opp = opponent_exit_index(game, p, theta_opp);

      for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& task = tasks[t];
        const std::size_t sigma_eq =
            stop_index(task.equilibrium, p.states, p.a, opts.dt, game.table);
        const double v_eq =
            sampled_value(game, p, discount, task.theta, sigma_eq, tau_opp);
        acc.eq[t].add(v_eq);
        for (std::size_t d = 0; d < task.deviations.size(); ++d) {
          const std::size_t sigma =
              stop_index(task.deviations[d], p.states, p.a, opts.dt, game.table);
          const double v =
              sampled_value(game, p, discount, task.theta, sigma, tau_opp);
          auto& pair = acc.dev[dev_offset[t] + d];
          pair.value.add(v);
          pair.diff.add(v - v_eq);
        }
      }
    }
    blocks[b] = std::move(acc);
  });

  std::vector<McAccumulator> eq_total(tasks.size());
  std::vector<PairAccumulator> dev_total(n_dev_total);
  for (const auto& blk : blocks) {
    for (std::size_t t = 0; t < tasks.size(); ++t) eq_total[t].merge(blk.eq[t]);
    for (std::size_t d = 0; d < n_dev_total; ++d) {
      dev_total[d].value.merge(blk.dev[d].value);
      dev_total[d].diff.merge(blk.dev[d].diff);
    }
  }

  std::vector<AuditReport> reports;
  reports.reserve(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    AuditReport rep;
    rep.x0 = x0;
    rep.theta = tasks[t].theta;
    rep.significance = significance;
    rep.n_paths = n_paths;
    rep.equilibrium_value = eq_total[t].estimate();
    for (std::size_t d = 0; d < tasks[t].deviations.size(); ++d) {
      const auto& pair = dev_total[dev_offset[t] + d];
      DeviationResult res;
      res.rule = describe(tasks[t].deviations[d]);
      res.value = pair.value.estimate();
      const McEstimate diff = pair.diff.estimate();
      res.diff_mean = diff.estimate;
      res.diff_std_error = diff.std_error;
      res.wins = diff.estimate > significance * diff.std_error;
      if (res.wins) rep.violations.push_back(res.rule);
      rep.deviations.push_back(std::move(res));
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace detail

// Paired CRN audit of the equilibrium rule against a deviation family. A
// deviation "wins" only when its mean payoff exceeds the equilibrium rule's
// by more than significance paired standard errors.
inline AuditReport audit_best_response(const GameModel& game, double x0,
                                       double theta,
                                       std::span<const StoppingRule> deviations,
                                       std::size_t n_paths, double significance,
                                       const AuditOptions& opts = {}) {
  if (deviations.empty())
    throw std::invalid_argument("audit_best_response: deviation set must not be empty");
  detail::AuditTask task;
  task.theta = theta;
  task.equilibrium = RectRule{game.table.alpha(theta), game.dist.big_a(theta)};
  task.deviations.assign(deviations.begin(), deviations.end());
  return detail::run_audit(game, x0, {&task, 1}, n_paths, significance, opts)[0];
}

// Same audit across several types on one shared path bank. n_deviations
// trims the default family (for quick scans); 0 keeps all 24.
inline std::vector<AuditReport> audit_best_response_multi(
    const GameModel& game, double x0, std::span<const double> thetas,
    std::size_t n_paths, double significance, const AuditOptions& opts = {},
    std::size_t n_deviations = 0) {
  std::vector<detail::AuditTask> tasks;
  tasks.reserve(thetas.size());
  for (double theta : thetas) {
    detail::AuditTask task;
    task.theta = theta;
    task.equilibrium = RectRule{game.table.alpha(theta), game.dist.big_a(theta)};
    task.deviations = default_deviations(game, theta);
    if (n_deviations > 0 && n_deviations < task.deviations.size())
      task.deviations.resize(n_deviations);
    tasks.push_back(std::move(task));
  }
  return detail::run_audit(game, x0, tasks, n_paths, significance, opts);
}

enum class CellLabel { Stop, Continue };

struct RegionCell {
  double x = 0.0;
  double a = 0.0;
  CellLabel label = CellLabel::Continue;
  double v_tilde = 0.0;     // best rule's estimate of the shifted value
  double std_error = 0.0;   // its standard error
  std::string best_rule;
};

struct RegionOptions {
  std::size_t n_paths = 4000;
  double dt = 2e-3;
  double horizon = 8.0;
  double significance = 3.0;
  std::uint64_t seed = 12345;
  std::span<const double> eps_ladder = kDefaultEpsLadder;
};

// Boundary-aware default grids: a few columns inside the stopping rectangle,
// the rest spread over the continuation region, and rows straddling the
// belief level without sitting on it.
inline std::vector<double> default_region_x_grid(const GameModel& game,
                                                 double theta) {
  const double al = game.table.alpha(theta);
  std::vector<double> xs;
  for (double f : {0.30, 0.52, 0.75, 0.97, 1.35, 1.80, 2.40, 3.20, 4.20, 5.40, 6.80, 8.50})
    xs.push_back(f * al);
  return xs;
}

inline std::vector<double> default_region_a_grid(const GameModel& game,
                                                 double theta) {
  const double lv = game.dist.big_a(theta);
  std::vector<double> as;
  for (double f : {0.0, 0.25, 0.50, 0.70, 0.87}) as.push_back(f * lv);
  for (double off : {0.16, 0.40, 0.80, 1.30, 1.90, 2.60, 3.40}) as.push_back(lv + off);
  return as;
}

// Rule family for the region scan: stop-now anchors plus rectangle variants
// around the conjectured optimum. All of them stop well before the horizon,
// so the truncated tail stays below the statistical resolution.
inline std::vector<StoppingRule> region_rule_family(const GameModel& game,
                                                    double theta) {
  const double al = game.table.alpha(theta);
  const double lv = game.dist.big_a(theta);
  std::vector<StoppingRule> rules;
  rules.push_back(ImmediateRule{});
  rules.push_back(RectRule{al, lv});
  rules.push_back(SinglePlayerRule{theta});
  rules.push_back(RectRule{0.9 * al, 0.8 * lv});
  rules.push_back(RectRule{0.9 * al, 1.2 * lv});
  rules.push_back(RectRule{1.1 * al, 0.8 * lv});
  rules.push_back(RectRule{1.1 * al, 1.2 * lv});
  rules.push_back(time_shift(RectRule{al, lv}, 0.05));
  return rules;
}

// Classify each grid cell by restarting the extended state at (x, a),
// estimating the shifted value as the best rule's payoff minus the value of
// stopping immediately, and calling the cell STOP when that estimate is
// statistically indistinguishable from zero (or below).
inline std::vector<RegionCell> classify_region(const GameModel& game,
                                               double theta,
                                               std::span<const double> x_grid,
                                               std::span<const double> a_grid,
                                               const RegionOptions& opts = {}) {
  const auto n_steps = static_cast<std::size_t>(std::ceil(opts.horizon / opts.dt));
  NoiseGrid noise(opts.seed, opts.dt, n_steps);
  std::vector<double> discount(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k)
    discount[k] = std::exp(-game.spec.r() * opts.dt * static_cast<double>(k));

  const std::vector<StoppingRule> rules = region_rule_family(game, theta);
  const std::size_t n_rules = rules.size();
  const std::size_t n_rows = a_grid.size();

  std::vector<RegionCell> cells;
  cells.reserve(x_grid.size() * n_rows);

  for (double x0 : x_grid) {
    // One pass of paths per column; every row reuses the same state draws.
    const std::size_t n_blocks = (opts.n_paths + kBlock - 1) / kBlock;
    std::vector<std::vector<McAccumulator>> blocks(
        n_blocks, std::vector<McAccumulator>(n_rows * n_rules));
    for_each_block(opts.n_paths, kBlock, [&](std::size_t b, std::size_t begin,
                                             std::size_t end) {
      auto& acc = blocks[b];
      detail::PayoffPathData p;
      std::vector<std::size_t> sigma(n_rules);
      for (std::size_t i = begin; i < end; ++i) {
        p.resize(n_steps);
        noise.fill(i, p.z);
        simulate_states(game.model, x0, opts.dt, p.z, p.states);
        p.cache.build(game, p.states);
        for (std::size_t row = 0; row < n_rows; ++row) {
          detail::run_eps_ladder(game, p.cache, a_grid[row], opts.eps_ladder,
                                 opts.dt, p.a, p.scratch);
          for (std::size_t k = 0; k <= n_steps; ++k)
            p.survival[k] = std::exp(-p.a[k]);
          p.flow_weighted[0] = 0.0;
          p.monop_weighted[0] = 0.0;
          double prev_fw = discount[0] * p.cache.flow[0] * p.survival[0];
          double prev_mw = discount[0] * p.survival[0] * p.cache.monopoly[0];
          for (std::size_t k = 1; k <= n_steps; ++k) {
            const double fw = discount[k] * p.cache.flow[k] * p.survival[k];
            const double mw = discount[k] * p.survival[k] * p.cache.monopoly[k];
            p.flow_weighted[k] =
                p.flow_weighted[k - 1] + 0.5 * (prev_fw + fw) * opts.dt;
            p.monop_weighted[k] = p.monop_weighted[k - 1] +
                                  0.5 * (prev_mw + mw) * (p.a[k] - p.a[k - 1]);
            prev_fw = fw;
            prev_mw = mw;
          }
          for (std::size_t ri = 0; ri < n_rules; ++ri) {
            const std::size_t s =
                stop_index(rules[ri], p.states, p.a, opts.dt, game.table);
            acc[row * n_rules + ri].add(
                detail::integrated_value(p, discount, theta, s));
          }
        }
      }
    });

    std::vector<McAccumulator> total(n_rows * n_rules);
    for (const auto& blk : blocks)
      for (std::size_t j = 0; j < total.size(); ++j) total[j].merge(blk[j]);

    for (std::size_t row = 0; row < n_rows; ++row) {
      const double stop_now = theta * std::exp(-a_grid[row]);
      RegionCell cell;
      cell.x = x0;
      cell.a = a_grid[row];
      double best = -kInf;
      double best_se = 0.0;
      std::size_t best_ri = 0;
      for (std::size_t ri = 0; ri < n_rules; ++ri) {
        const McEstimate e = total[row * n_rules + ri].estimate();
        const double v = e.estimate - stop_now;
        if (v > best) {
          best = v;
          best_se = e.std_error;
          best_ri = ri;
        }
      }
      cell.v_tilde = best;
      cell.std_error = best_se;
      cell.best_rule = describe(rules[best_ri]);
      // the epsilon absorbs round-off in exact stop-now ties
      const double cutoff =
          opts.significance * best_se + 1e-12 * (1.0 + std::abs(stop_now));
      cell.label = best <= cutoff ? CellLabel::Stop : CellLabel::Continue;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace exitduel

#endif  // EXITDUEL_BEST_RESPONSE_HPP
