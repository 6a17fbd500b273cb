#ifndef EXITDUEL_SINGLE_PLAYER_HPP
#define EXITDUEL_SINGLE_PLAYER_HPP

// Auxiliary one-player exit problem: the critical level c(theta) where the
// flow matches the annuity r*theta, the exit boundary alpha(theta) obtained
// by maximising a_theta(x) = (theta - d(x)) / phi(x), and the resulting value
// function u(x; theta). alpha is tabulated on a theta grid and interpolated;
// the table also carries a short extension above the type support so that the
// boundary inverse stays well defined slightly beyond it (the smoothed
// equilibrium rate in equilibrium.hpp needs that).

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "exitduel/common.hpp"
#include "exitduel/diffusion.hpp"
#include "exitduel/payoffs.hpp"

namespace exitduel {

inline double a_theta(double x, double theta, const ResolventPair& res,
                      const std::function<double(double)>& phi) {
  return (theta - res.d(x)) / phi(x);
}

// Unique x with D(x) = r*theta, by bisection on the increasing flow.
// Returns +inf when r*theta exceeds the flow's supremum.
inline double c_critical(double theta, const ProfitSpec& spec) {
  const double target = spec.r() * theta;
  if (!(target > 0.0)) throw std::invalid_argument("c_critical: r*theta must be > 0");
  const double sup = spec.duopoly_sup();
  if (target > sup) return kInf;

  double hi = spec.has_example_family() ? spec.x_cap() : 1.0;
  if (!spec.has_example_family()) {
    int guard = 0;
    while (spec.duopoly(hi) < target) {
      hi *= 2.0;
      if (++guard > 200) return kInf;
    }
  }
  double lo = hi;
  int guard = 0;
  while (spec.duopoly(lo) >= target) {
    lo *= 0.25;
    if (++guard > 200)
      throw std::runtime_error("c_critical: could not bracket D(x) = r*theta from below");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (spec.duopoly(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Golden-section maximisation on [a, b]; assumes a single interior maximum.
inline double golden_max(const std::function<double(double)>& f, double a,
                         double b, double tol) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

struct AlphaSolveOptions {
  double tol = 1e-8;
  int scan_points = 128;
};

// Exit boundary for a given type: bracket the maximiser of a_theta on a log
// grid below c(theta), then refine by golden section. A maximum pinned to the
// left edge means the profile is not unimodal in the assumed way.
inline double solve_alpha(double theta, const ProfitSpec& spec,
                          const ResolventPair& res,
                          const std::function<double(double)>& phi,
                          AlphaSolveOptions opts = {}) {
  const double cap = c_critical(theta, spec);
  if (!(cap < kInf))
    throw std::runtime_error("solve_alpha: c(theta) is unbounded; cannot bracket the maximiser");
  auto f = [&](double x) { return a_theta(x, theta, res, phi); };

  const int n = opts.scan_points;
  const double lo = cap * 1e-6;
  const double ratio = std::pow(cap / lo, 1.0 / static_cast<double>(n - 1));
  std::vector<double> xs(n);
  double best = -kInf;
  int best_i = 0;
  double x = lo;
  for (int i = 0; i < n; ++i) {
    xs[i] = x;
    const double v = f(x);
    if (v > best) {
      best = v;
      best_i = i;
    }
    x *= ratio;
  }
  if (best_i == 0)
    throw std::runtime_error("solve_alpha: no interior bracket below c(theta); threshold assumption violated");
  if (best_i == n - 1) return cap;  // boundary case alpha(theta) = c(theta)
  return golden_max(f, xs[best_i - 1], xs[best_i + 1], opts.tol);
}

// theta -> alpha(theta) on a uniform grid with monotone piecewise-linear
// interpolation, plus the exact inverse of that interpolant.
class ThresholdTable {
 public:
  struct BuildOptions {
    std::size_t n_points = 201;  // grid points on [theta_lo, theta_hi]
    double margin = 0.25;        // extension above theta_hi, same spacing
    double tol = 1e-8;
    int scan_points = 128;
  };

  ThresholdTable(ProfitSpec spec, ResolventPair res,
                 std::function<double(double)> phi, double theta_lo,
                 double theta_hi)
      : ThresholdTable(std::move(spec), std::move(res), std::move(phi),
                       theta_lo, theta_hi, BuildOptions{}) {}

  ThresholdTable(ProfitSpec spec, ResolventPair res,
                 std::function<double(double)> phi, double theta_lo,
                 double theta_hi, BuildOptions opts)
      : spec_(std::move(spec)),
        res_(std::move(res)),
        phi_(std::move(phi)),
        theta_lo_(theta_lo),
        theta_hi_(theta_hi) {
    if (!(theta_lo < theta_hi))
      throw std::invalid_argument("ThresholdTable: theta_lo must be < theta_hi");
    if (opts.n_points < 2)
      throw std::invalid_argument("ThresholdTable: need at least two grid points");

    const double h = (theta_hi - theta_lo) / static_cast<double>(opts.n_points - 1);
    const std::size_t n_ext = static_cast<std::size_t>(std::ceil(opts.margin / h));
    n_support_ = opts.n_points;
    const std::size_t n_total = opts.n_points + n_ext;
    thetas_.resize(n_total);
    alphas_.resize(n_total);
    AlphaSolveOptions aopts{opts.tol, opts.scan_points};
    for (std::size_t i = 0; i < n_total; ++i) {
      thetas_[i] = theta_lo + h * static_cast<double>(i);
      alphas_[i] = solve_alpha(thetas_[i], spec_, res_, phi_, aopts);
    }
    for (std::size_t i = 1; i < n_total; ++i) {
      if (!(alphas_[i] > alphas_[i - 1]))
        throw std::logic_error("ThresholdTable: alpha grid not strictly increasing at theta=" +
                               std::to_string(thetas_[i]));
    }
  }

  double theta_lo() const { return theta_lo_; }
  double theta_hi() const { return theta_hi_; }
  double theta_grid_hi() const { return thetas_.back(); }

  // Support grid only; the extension is an internal detail.
  std::span<const double> thetas() const {
    return {thetas_.data(), n_support_};
  }
  std::span<const double> alphas() const {
    return {alphas_.data(), n_support_};
  }

  double phi(double x) const { return phi_(x); }
  const ResolventPair& resolvents() const { return res_; }
  const ProfitSpec& spec() const { return spec_; }

  double alpha(double theta) const {
    if (theta <= thetas_.front()) return alphas_.front();
    if (theta >= thetas_.back()) return alphas_.back();
    const double h = thetas_[1] - thetas_[0];
    const std::size_t i = std::min(
        thetas_.size() - 2,
        static_cast<std::size_t>((theta - thetas_.front()) / h));
    const double w = (theta - thetas_[i]) / (thetas_[i + 1] - thetas_[i]);
    return alphas_[i] + w * (alphas_[i + 1] - alphas_[i]);
  }

  // Exact inverse of the interpolated boundary, clamped to the grid range.
  double alpha_inv(double x) const {
    if (x <= alphas_.front()) return thetas_.front();
    if (x >= alphas_.back()) return thetas_.back();
    const auto it = std::upper_bound(alphas_.begin(), alphas_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - alphas_.begin()) - 1;
    const double w = (x - alphas_[i]) / (alphas_[i + 1] - alphas_[i]);
    return thetas_[i] + w * (thetas_[i + 1] - thetas_[i]);
  }

  double a_theta_at(double x, double theta) const {
    return a_theta(x, theta, res_, phi_);
  }

  // Single-player value: theta inside the stopping region, smooth-fit
  // extension above it.
  double u(double x, double theta) const {
    const double a = alpha(theta);
    if (x <= a) return theta;
    return a_theta_at(a, theta) * phi_(x) + res_.d(x);
  }

 private:
  ProfitSpec spec_;
  ResolventPair res_;
  std::function<double(double)> phi_;
  double theta_lo_;
  double theta_hi_;
  std::size_t n_support_ = 0;
  std::vector<double> thetas_;
  std::vector<double> alphas_;
};

inline double u_value(double x, double theta, const ThresholdTable& table) {
  return table.u(x, theta);
}

// Monte-Carlo value of the policy "exit at the first grid time with
// X <= threshold" for a player facing no opponent. Independent route used to
// audit the analytic value and the optimality of alpha(theta).
inline McEstimate threshold_policy_value(const DiffusionModel& model,
                                         const ProfitSpec& spec, double x0,
                                         double theta, double threshold,
                                         std::size_t n_paths,
                                         const NoiseGrid& noise) {
  const double r = spec.r();
  const double dt = noise.step();
  const std::size_t n_steps = noise.n_steps();
  std::vector<double> discount(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k)
    discount[k] = std::exp(-r * dt * static_cast<double>(k));

  const std::size_t n_blocks = (n_paths + kBlock - 1) / kBlock;
  std::vector<McAccumulator> acc(n_blocks);
  for_each_block(n_paths, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    std::vector<double> z(n_steps);
    std::vector<double> states(n_steps + 1);
    McAccumulator local;
    for (std::size_t i = begin; i < end; ++i) {
      noise.fill(i, z);
      simulate_states(model, x0, dt, z, states);
      double integral = 0.0;
      double prev = discount[0] * spec.duopoly(states[0]);
      double value = 0.0;
      bool stopped = states[0] <= threshold;
      if (stopped) {
        value = theta;
      } else {
        std::size_t k = 1;
        for (; k <= n_steps; ++k) {
          const double cur = discount[k] * spec.duopoly(states[k]);
          integral += 0.5 * (prev + cur) * dt;
          prev = cur;
          if (states[k] <= threshold) {
            value = integral + discount[k] * theta;
            stopped = true;
            break;
          }
        }
        if (!stopped) value = integral;  // truncated tail, no exit by horizon
      }
      local.add(value);
    }
    acc[b] = local;
  });
  McAccumulator total;
  for (const auto& a : acc) total.merge(a);
  return total.estimate();
}

}  // namespace exitduel

#endif  // EXITDUEL_SINGLE_PLAYER_HPP
