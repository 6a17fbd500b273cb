#ifndef EXITDUEL_EQUILIBRIUM_HPP
#define EXITDUEL_EQUILIBRIUM_HPP

// Equilibrium machinery: the type distribution and its A(y)/Y(a)
// reparametrisation, the exit-rate generator lambda and its Lipschitz
// smoothing, the belief integrator along a state path, exit times in their
// two equivalent forms, and a full two-player game simulation.
//
// The belief ODE dA = lambda(X, Y(A)) dt has a discontinuous right-hand side
// (the indicator of the action region x <= alpha(y)). We integrate the
// smoothed rate lambda_eps, which replaces the indicator by a linear ramp of
// width eps in the type variable, and drive eps down a ladder. The smoothed
// solutions decrease monotonically toward the limit as eps shrinks, which the
// integrator checks step by step.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "exitduel/common.hpp"
#include "exitduel/diffusion.hpp"
#include "exitduel/payoffs.hpp"
#include "exitduel/single_player.hpp"

namespace exitduel {

inline constexpr std::array<double, 5> kDefaultEpsLadder{0.08, 0.04, 0.02,
                                                         0.01, 0.005};

class TypeDistribution {
 public:
  static TypeDistribution uniform(double theta_lo, double theta_hi) {
    if (!(theta_lo < theta_hi))
      throw std::invalid_argument("TypeDistribution: theta_lo must be < theta_hi");
    TypeDistribution d;
    d.lo_ = theta_lo;
    d.hi_ = theta_hi;
    d.uniform_ = true;
    return d;
  }

  // Strictly increasing tabulated CDF with F(last) = 1, interpolated
  // piecewise linearly.
  static TypeDistribution tabulated(std::vector<double> thetas,
                                    std::vector<double> cdf) {
    if (thetas.size() != cdf.size() || thetas.size() < 2)
      throw std::invalid_argument("TypeDistribution: tabulated arrays mismatch");
    for (std::size_t i = 1; i < thetas.size(); ++i)
      if (!(thetas[i] > thetas[i - 1] && cdf[i] > cdf[i - 1]))
        throw std::invalid_argument("TypeDistribution: tabulated CDF must be strictly increasing");
    if (!(cdf.front() >= 0.0) || std::abs(cdf.back() - 1.0) > 1e-12)
      throw std::invalid_argument("TypeDistribution: tabulated CDF must end at 1");
    TypeDistribution d;
    d.lo_ = thetas.front();
    d.hi_ = thetas.back();
    d.uniform_ = false;
    d.thetas_ = std::move(thetas);
    d.cdf_ = std::move(cdf);
    d.cdf_.back() = 1.0;
    return d;
  }

  double theta_lo() const { return lo_; }
  double theta_hi() const { return hi_; }
  bool is_uniform() const { return uniform_; }

  double cdf(double y) const {
    if (y <= lo_) return uniform_ ? 0.0 : cdf_.front();
    if (y >= hi_) return 1.0;
    if (uniform_) return (y - lo_) / (hi_ - lo_);
    const auto it = std::upper_bound(thetas_.begin(), thetas_.end(), y);
    const std::size_t i = static_cast<std::size_t>(it - thetas_.begin()) - 1;
    const double w = (y - thetas_[i]) / (thetas_[i + 1] - thetas_[i]);
    return cdf_[i] + w * (cdf_[i + 1] - cdf_[i]);
  }

  double quantile(double p) const {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::domain_error("TypeDistribution::quantile: p outside [0, 1]");
    if (uniform_) return lo_ + p * (hi_ - lo_);
    if (p <= cdf_.front()) return thetas_.front();
    if (p >= 1.0) return hi_;
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), p);
    const std::size_t i = static_cast<std::size_t>(it - cdf_.begin()) - 1;
    const double w = (p - cdf_[i]) / (cdf_[i + 1] - cdf_[i]);
    return thetas_[i] + w * (thetas_[i + 1] - thetas_[i]);
  }

  // A(y) = -log F(y), decreasing, with A(theta_lo) = +inf.
  double big_a(double y) const {
    if (y < lo_)
      throw std::domain_error("TypeDistribution::big_a: y below the support");
    if (y == lo_) return kInf;
    return -std::log(cdf(y));
  }

  // Y(a) = F^{-1}(e^{-a}), decreasing, Y(0) = theta_hi.
  double big_y(double a) const {
    if (!(a >= 0.0)) throw std::domain_error("TypeDistribution::big_y: a must be >= 0");
    if (uniform_) return lo_ + (hi_ - lo_) * std::exp(-a);
    return quantile(std::exp(-a));
  }

 private:
  TypeDistribution() = default;
  double lo_ = 0.0;
  double hi_ = 1.0;
  bool uniform_ = true;
  std::vector<double> thetas_;
  std::vector<double> cdf_;
};

struct BeliefPath {
  std::vector<double> times;
  std::vector<double> a_values;
  double epsilon_used = 0.0;
  bool converged = false;
};

enum class FirstExiter { One, Two, Both, None };

struct GameOutcome {
  double exit_time_1 = kInf;
  double exit_time_2 = kInf;
  double payoff_1 = 0.0;
  double payoff_2 = 0.0;
  FirstExiter first_exiter = FirstExiter::None;
};

// Immutable bundle of everything the equilibrium evaluators need.
struct GameModel {
  DiffusionModel model;
  ProfitSpec spec;
  ResolventPair res;
  ThresholdTable table;
  TypeDistribution dist;

  static GameModel build(DiffusionModel model, ProfitSpec spec,
                         ResolventPair res, TypeDistribution dist,
                         ThresholdTable::BuildOptions topts = {}) {
    std::function<double(double)> phi;
    if (model.kind() == ModelKind::Gbm) {
      const auto [gp, gm] = gbm_exponents(model.mu_coef(), model.vol_coef(), spec.r());
      (void)gp;
      const double gamma_minus = gm;
      phi = [gamma_minus](double x) { return std::pow(x, gamma_minus); };
    } else {
      throw std::invalid_argument("GameModel::build: supply phi explicitly for a general model");
    }
    return build_with_phi(std::move(model), std::move(spec), std::move(res),
                          std::move(dist), std::move(phi), topts);
  }

  static GameModel build_with_phi(DiffusionModel model, ProfitSpec spec,
                                  ResolventPair res, TypeDistribution dist,
                                  std::function<double(double)> phi,
                                  ThresholdTable::BuildOptions topts = {}) {
    if (!(res.m_min() > dist.theta_hi()))
      throw std::invalid_argument("GameModel: requires m_min > theta_hi");
    ThresholdTable table(spec, res, std::move(phi), dist.theta_lo(),
                         dist.theta_hi(), topts);
    return GameModel{std::move(model), std::move(spec), std::move(res),
                     std::move(table), std::move(dist)};
  }

  // Uniform bound on the exit rate: r theta_U / (m_min - theta_U).
  double lambda_max() const {
    return spec.r() * dist.theta_hi() / (res.m_min() - dist.theta_hi());
  }

  // Raw rate without the action-region indicator.
  double ell(double x, double y) const {
    const double m = res.m(x);
    if (!(m > y))
      throw std::runtime_error("GameModel::ell: m(x) <= y, monopoly-value assumption breached");
    return (spec.r() * y - spec.duopoly(x)) / (m - y);
  }

  // Exit-rate generator: ell on the action region x <= alpha(y), zero above.
  double lambda(double x, double y) const {
    if (!(y >= dist.theta_lo() && y <= dist.theta_hi()))
      throw std::domain_error("GameModel::lambda: y outside the type support");
    return x <= table.alpha(y) ? ell(x, y) : 0.0;
  }

  // Lipschitz-in-y smoothing of lambda. Writing yb = alpha^{-1}(x): equal to
  // ell(x, y) for y >= yb, and a linear ramp of width eps below yb whose
  // height is ell at the boundary type (held at the top of the type support
  // once yb leaves it, which keeps the rate below lambda_max). Decreases
  // pointwise to lambda as eps -> 0 away from the boundary curve.
  double lambda_eps(double x, double y, double eps) const {
    if (!(eps > 0.0)) throw std::invalid_argument("GameModel::lambda_eps: eps must be > 0");
    const double yb = table.alpha_inv(x);
    if (y >= yb) return ell(x, y);
    const double ramp = y - yb + eps;
    if (ramp <= 0.0) return 0.0;
    return ell(x, std::min(yb, dist.theta_hi())) * ramp / eps;
  }
};

namespace detail {

// Per-path cache of the state functionals the belief integrator touches at
// every step, so the eps ladder does not re-evaluate them per rung.
struct PathCache {
  std::vector<double> flow;       // D(X_k)
  std::vector<double> monopoly;   // m(X_k)
  std::vector<double> boundary;   // alpha_inv(X_k)

  void build(const GameModel& game, std::span<const double> states) {
    const std::size_t n = states.size();
    flow.resize(n);
    monopoly.resize(n);
    boundary.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      flow[k] = game.spec.duopoly(states[k]);
      monopoly[k] = game.res.m(states[k]);
      boundary[k] = game.table.alpha_inv(states[k]);
    }
  }
};

inline double smoothed_rate(const GameModel& game, const PathCache& cache,
                            std::size_t k, double y, double eps) {
  const double r = game.spec.r();
  const double yb = cache.boundary[k];
  if (y >= yb) return (r * y - cache.flow[k]) / (cache.monopoly[k] - y);
  const double ramp = y - yb + eps;
  if (ramp <= 0.0) return 0.0;
  const double yc = std::min(yb, game.dist.theta_hi());
  return (r * yc - cache.flow[k]) / (cache.monopoly[k] - yc) * ramp / eps;
}

// Explicit Euler pass for one eps rung. a_out[0] = a0. If survival is given
// it receives e^{-A_k}.
inline void belief_rung(const GameModel& game, const PathCache& cache,
                        double a0, double eps, double dt,
                        std::span<double> a_out, double* max_step = nullptr) {
  const std::size_t n_steps = a_out.size() - 1;
  const double cap = game.lambda_max() * (1.0 + 1e-9);
  double a = a0;
  a_out[0] = a0;
  double worst = 0.0;
  const bool uni = game.dist.is_uniform();
  const double lo = game.dist.theta_lo();
  const double span_theta = game.dist.theta_hi() - game.dist.theta_lo();
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double y = uni ? lo + span_theta * std::exp(-a) : game.dist.big_y(a);
    const double rate = smoothed_rate(game, cache, k, y, eps);
    if (rate > cap)
      throw std::logic_error("belief_rung: rate exceeded the lambda bound");
    if (rate > worst) worst = rate;
    a += rate * dt;
    a_out[k + 1] = a;
  }
  if (max_step) *max_step = worst * dt;
}

// Runs the ladder into a_out, checking that rungs decrease monotonically in
// eps (up to one Euler step of slack). Returns the sup-gap of the last pair.
inline double run_eps_ladder(const GameModel& game, const PathCache& cache,
                             double a0, std::span<const double> eps_ladder,
                             double dt, std::vector<double>& a_out,
                             std::vector<double>& scratch) {
  if (eps_ladder.empty())
    throw std::invalid_argument("run_eps_ladder: empty eps ladder");
  for (std::size_t i = 1; i < eps_ladder.size(); ++i)
    if (!(eps_ladder[i] < eps_ladder[i - 1]))
      throw std::invalid_argument("run_eps_ladder: eps ladder must be strictly decreasing");

  const double slack = 2.0 * game.lambda_max() * dt + 1e-12;
  double sup_gap = kInf;
  belief_rung(game, cache, a0, eps_ladder[0], dt, a_out);
  for (std::size_t i = 1; i < eps_ladder.size(); ++i) {
    scratch.resize(a_out.size());
    belief_rung(game, cache, a0, eps_ladder[i], dt, scratch);
    sup_gap = 0.0;
    for (std::size_t k = 0; k < a_out.size(); ++k) {
      const double rise = scratch[k] - a_out[k];
      if (rise > slack)
        throw std::logic_error("run_eps_ladder: smoothed solutions not monotone in eps");
      sup_gap = std::max(sup_gap, std::abs(a_out[k] - scratch[k]));
    }
    std::swap(a_out, scratch);
  }
  return sup_gap;
}

}  // namespace detail

// Carathéodory-style belief integration along one state path: integrate the
// smoothed ODE for each rung of the eps ladder and return the smallest-eps
// solution. converged reports whether the last two rungs agreed within
// conv_tol in the sup norm.
inline BeliefPath integrate_belief(const GameModel& game, const SamplePath& path,
                                   double a0,
                                   std::span<const double> eps_ladder = kDefaultEpsLadder,
                                   double conv_tol = 1e-2) {
  if (!(a0 >= 0.0)) throw std::invalid_argument("integrate_belief: a0 must be >= 0");
  if (path.times.size() != path.states.size() || path.times.size() < 2)
    throw std::invalid_argument("integrate_belief: malformed path");
  const double dt = path.times[1] - path.times[0];

  detail::PathCache cache;
  cache.build(game, path.states);
  std::vector<double> a(path.times.size());
  std::vector<double> scratch;
  const double sup_gap = detail::run_eps_ladder(game, cache, a0, eps_ladder, dt, a, scratch);

  BeliefPath belief;
  belief.times = path.times;
  belief.a_values = std::move(a);
  belief.epsilon_used = eps_ladder.back();
  belief.converged = eps_ladder.size() > 1 && sup_gap < conv_tol;
  return belief;
}

namespace detail {

// First grid index at which the generating process strictly exceeds the
// level; sitting exactly on the level counts as soon as the next step moves
// strictly above it (the continuous-time infimum of an increasing process).
inline std::size_t first_exceed_index(std::span<const double> a, double level) {
  const std::size_t n = a.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (a[k] > level) return k;
    if (a[k] == level && k + 1 < n && a[k + 1] > level) return k;
  }
  return kNeverIndex;
}

inline std::size_t first_rect_index(std::span<const double> a,
                                    std::span<const double> states,
                                    double a_level, double x_level) {
  const std::size_t n = a.size();
  for (std::size_t k = 0; k < n; ++k)
    if (a[k] >= a_level && states[k] <= x_level) return k;
  return kNeverIndex;
}

}  // namespace detail

struct ExitTimes {
  double tau_a = kInf;     // first time A exceeds A(theta)
  double tau_rect = kInf;  // first time Y(A) <= theta and X <= alpha(theta)
};

inline ExitTimes exit_time(double theta, const BeliefPath& belief,
                           const SamplePath& path, const TypeDistribution& dist,
                           const ThresholdTable& table) {
  if (!(theta >= dist.theta_lo() && theta <= dist.theta_hi()))
    throw std::domain_error("exit_time: theta outside the type support");
  const double level = dist.big_a(theta);
  ExitTimes out;
  if (level == kInf) return out;  // bottom type never exits
  const std::size_t ka = detail::first_exceed_index(belief.a_values, level);
  if (ka != kNeverIndex) out.tau_a = belief.times[ka];
  const std::size_t kr = detail::first_rect_index(belief.a_values, path.states,
                                                  level, table.alpha(theta));
  if (kr != kNeverIndex) out.tau_rect = path.times[kr];
  return out;
}

// Full game: both players follow the rectangular exit rule against the shared
// belief path. Discounted duopoly flow accrues to the first exit; the leaver
// takes the exit value, the stayer the monopoly resolvent at the exit state.
// Simultaneous grid-time exits give both players their exit values.
inline GameOutcome simulate_game(const GameModel& game, double x0, double theta1,
                                 double theta2, std::uint64_t seed,
                                 double horizon, double dt,
                                 std::span<const double> eps_ladder = kDefaultEpsLadder) {
  const auto n_steps = static_cast<std::size_t>(std::llround(horizon / dt));
  if (n_steps == 0) throw std::invalid_argument("simulate_game: empty time grid");
  NoiseGrid noise(seed, dt, n_steps);
  SamplePath path = simulate_path(game.model, x0, noise.horizon(), noise, 0);
  BeliefPath belief = integrate_belief(game, path, 0.0, eps_ladder);

  const double r = game.spec.r();
  const std::size_t n = path.times.size();
  std::vector<double> flow_integral(n, 0.0);
  double prev = game.spec.duopoly(path.states[0]);
  for (std::size_t k = 1; k < n; ++k) {
    const double cur = std::exp(-r * path.times[k]) * game.spec.duopoly(path.states[k]);
    flow_integral[k] = flow_integral[k - 1] + 0.5 * (prev + cur) * dt;
    prev = cur;
  }

  auto rect_index = [&](double theta) {
    const double level = game.dist.big_a(theta);
    if (level == kInf) return kNeverIndex;
    return detail::first_rect_index(belief.a_values, path.states, level,
                                    game.table.alpha(theta));
  };
  const std::size_t k1 = rect_index(theta1);
  const std::size_t k2 = rect_index(theta2);
  const std::size_t k_min = std::min(k1, k2);

  GameOutcome out;
  if (k1 != kNeverIndex) out.exit_time_1 = path.times[k1];
  if (k2 != kNeverIndex) out.exit_time_2 = path.times[k2];

  const double flow_part =
      (k_min == kNeverIndex) ? flow_integral[n - 1] : flow_integral[k_min];
  out.payoff_1 = flow_part;
  out.payoff_2 = flow_part;
  if (k_min == kNeverIndex) {
    out.first_exiter = FirstExiter::None;
    return out;
  }
  const double disc = std::exp(-r * path.times[k_min]);
  const double m_exit = game.res.m(path.states[k_min]);
  if (k1 < k2) {
    out.first_exiter = FirstExiter::One;
    out.payoff_1 += disc * theta1;
    out.payoff_2 += disc * m_exit;
  } else if (k2 < k1) {
    out.first_exiter = FirstExiter::Two;
    out.payoff_1 += disc * m_exit;
    out.payoff_2 += disc * theta2;
  } else {
    out.first_exiter = FirstExiter::Both;
    out.payoff_1 += disc * theta1;
    out.payoff_2 += disc * theta2;
  }
  return out;
}

}  // namespace exitduel

#endif  // EXITDUEL_EQUILIBRIUM_HPP
