#ifndef EXITDUEL_PAYOFFS_HPP
#define EXITDUEL_PAYOFFS_HPP

// Profit flows for the duopoly/monopoly phases, their discounted resolvents
// (closed form for the capped-power family under GBM, Monte-Carlo for
// anything else), and the parameter-regime checks the rest of the engine
// relies on.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "exitduel/common.hpp"
#include "exitduel/diffusion.hpp"

namespace exitduel {

// Capped power flow: x^beta below the cap, constant above.
inline double example_flow_d(double x, double beta, double x_cap) {
  if (!(x > 0.0)) throw std::domain_error("example_flow_d: x must be > 0");
  const double y = std::min(x, x_cap);
  return beta == 0.5 ? std::sqrt(y) : std::pow(y, beta);
}

class ProfitSpec {
 public:
  // Duopoly flow x^beta capped at x_cap, monopoly flow D + m0.
  static ProfitSpec example(double r, double beta, double x_cap, double m0) {
    if (!(r > 0.0)) throw std::invalid_argument("ProfitSpec: r must be > 0");
    if (!(beta > 0.0 && beta < 1.0))
      throw std::invalid_argument("ProfitSpec: beta must lie in (0, 1)");
    if (!(x_cap > 0.0)) throw std::invalid_argument("ProfitSpec: x_cap must be > 0");
    if (!(m0 > 0.0)) throw std::invalid_argument("ProfitSpec: m0 must be > 0");
    ProfitSpec s;
    s.r_ = r;
    s.family_ = Family{beta, x_cap, m0};
    return s;
  }

  static ProfitSpec custom(std::function<double(double)> duopoly,
                           std::function<double(double)> monopoly,
                           double duopoly_sup, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("ProfitSpec: r must be > 0");
    ProfitSpec s;
    s.r_ = r;
    s.duopoly_fn_ = std::move(duopoly);
    s.monopoly_fn_ = std::move(monopoly);
    s.duopoly_sup_ = duopoly_sup;
    return s;
  }

  double r() const { return r_; }
  bool has_example_family() const { return family_.has_value(); }
  double beta() const { return family_ref().beta; }
  double x_cap() const { return family_ref().x_cap; }
  double m0() const { return family_ref().m0; }

  double duopoly(double x) const {
    if (family_) return example_flow_d(x, family_->beta, family_->x_cap);
    return duopoly_fn_(x);
  }
  double monopoly(double x) const {
    if (family_) return duopoly(x) + family_->m0;
    return monopoly_fn_(x);
  }
  double duopoly_sup() const {
    if (family_) return std::pow(family_->x_cap, family_->beta);
    return duopoly_sup_;
  }

 private:
  struct Family {
    double beta;
    double x_cap;
    double m0;
  };
  ProfitSpec() = default;
  const Family& family_ref() const {
    if (!family_)
      throw std::logic_error("ProfitSpec: example-family parameter requested for a custom spec");
    return *family_;
  }

  double r_ = 1.0;
  std::optional<Family> family_;
  std::function<double(double)> duopoly_fn_;
  std::function<double(double)> monopoly_fn_;
  double duopoly_sup_ = 0.0;
};

// Closed-form resolvent of the capped power flow under GBM. The two branch
// coefficients come from matching value and first derivative at the cap.
struct ExampleResolvent {
  double r = 1.0;
  double beta = 0.5;
  double x_cap = 1000.0;
  double m0 = 2.0;
  double mu_coef = -0.5;
  double vol_coef = 1.0;
  double gamma_plus = 0.0;
  double gamma_minus = 0.0;
  double delta = 0.0;  // beta*mu + b^2*beta*(beta-1)/2
  double c1 = 0.0;     // coefficient on x^gamma_plus below the cap
  double c2 = 0.0;     // coefficient on x^gamma_minus above the cap

  static ExampleResolvent build(const ProfitSpec& spec, double mu_coef,
                                double vol_coef) {
    ExampleResolvent e;
    e.r = spec.r();
    e.beta = spec.beta();
    e.x_cap = spec.x_cap();
    e.m0 = spec.m0();
    e.mu_coef = mu_coef;
    e.vol_coef = vol_coef;
    const auto [gp, gm] = gbm_exponents(mu_coef, vol_coef, e.r);
    e.gamma_plus = gp;
    e.gamma_minus = gm;
    e.delta = e.beta * mu_coef + 0.5 * vol_coef * vol_coef * e.beta * (e.beta - 1.0);

    if (!(e.r > e.delta))
      throw std::invalid_argument("ExampleResolvent: requires r > delta");
    if (!(e.beta - 1.0 > gm && gm > -1.0))
      throw std::invalid_argument("ExampleResolvent: requires beta - 1 > gamma_minus > -1");
    if (!(e.beta * vol_coef * vol_coef * std::abs(gm) < 2.0 * e.r))
      throw std::invalid_argument("ExampleResolvent: requires beta*b^2*|gamma_minus| < 2r");

    // Value and slope matching at the cap:
    //   c1 * psi(xM) - c2 * phi(xM)  = xM^beta (1/r - 1/(r-delta))
    //   c1 * psi'(xM) - c2 * phi'(xM) = -beta xM^(beta-1)/(r-delta)
    // with psi(x) = x^gp, phi(x) = x^gm.
    const double xm = e.x_cap;
    const double rhs1 = std::pow(xm, e.beta) * (1.0 / e.r - 1.0 / (e.r - e.delta));
    const double rhs2 = -e.beta * std::pow(xm, e.beta - 1.0) / (e.r - e.delta);
    const double psi = std::pow(xm, gp);
    const double phi = std::pow(xm, gm);
    const double dpsi = gp * std::pow(xm, gp - 1.0);
    const double dphi = gm * std::pow(xm, gm - 1.0);
    const double wronskian = psi * (-dphi) + phi * dpsi;  // (gp - gm) xM^(gp+gm-1)
    e.c1 = (rhs1 * (-dphi) + phi * rhs2) / wronskian;
    e.c2 = (psi * rhs2 - dpsi * rhs1) / wronskian;
    return e;
  }

  double d(double x) const {
    if (!(x > 0.0)) throw std::domain_error("ExampleResolvent::d: x must be > 0");
    if (x <= x_cap) {
      const double xb = beta == 0.5 ? std::sqrt(x) : std::pow(x, beta);
      return xb / (r - delta) + c1 * std::pow(x, gamma_plus);
    }
    return std::pow(x_cap, beta) / r + c2 * std::pow(x, gamma_minus);
  }

  double m(double x) const { return d(x) + m0 / r; }
};

inline double resolvent_closed_form_d(double x, const ExampleResolvent& res) {
  return res.d(x);
}

// Discounted duopoly/monopoly resolvents behind a uniform surface. m_min is
// an analytic floor on inf m; for the example family d >= 0 gives m0/r.
class ResolventPair {
 public:
  static ResolventPair from_example(const ExampleResolvent& e) {
    ResolventPair p;
    p.d_ = [e](double x) { return e.d(x); };
    p.m_ = [e](double x) { return e.m(x); };
    p.m_min_ = e.m0 / e.r;
    p.example_ = e;
    return p;
  }

  static ResolventPair custom(std::function<double(double)> d,
                              std::function<double(double)> m, double m_min) {
    ResolventPair p;
    p.d_ = std::move(d);
    p.m_ = std::move(m);
    p.m_min_ = m_min;
    return p;
  }

  double d(double x) const { return d_(x); }
  double m(double x) const { return m_(x); }
  double m_min() const { return m_min_; }
  const std::optional<ExampleResolvent>& example() const { return example_; }

 private:
  ResolventPair() = default;
  std::function<double(double)> d_;
  std::function<double(double)> m_;
  double m_min_ = 0.0;
  std::optional<ExampleResolvent> example_;
};

// Monte-Carlo resolvent: trapezoidal quadrature of e^{-rt} flow(X_t) along
// simulated paths. flow_sup bounds |flow| and feeds the truncation check
// sup|flow| e^{-r T} / r < tail_tol. Pass tail_tol <= 0 for the default
// 1e-4 * flow_sup / r.
inline McEstimate resolvent_mc(const DiffusionModel& model,
                               const std::function<double(double)>& flow,
                               double flow_sup, double r, double x0,
                               double horizon, std::size_t n_paths,
                               const NoiseGrid& noise, double tail_tol = 0.0) {
  if (!(r > 0.0)) throw std::invalid_argument("resolvent_mc: r must be > 0");
  if (tail_tol <= 0.0) tail_tol = 1e-4 * flow_sup / r;
  if (flow_sup * std::exp(-r * horizon) / r >= tail_tol)
    throw std::invalid_argument("resolvent_mc: horizon too small for requested tail tolerance");
  const double expected = noise.horizon();
  if (std::abs(horizon - expected) > 1e-9 * std::max(1.0, expected))
    throw std::invalid_argument("resolvent_mc: horizon != noise grid horizon");

  const std::size_t n_steps = noise.n_steps();
  const double dt = noise.step();
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
      double prev = discount[0] * flow(states[0]);
      double integral = 0.0;
      for (std::size_t k = 1; k <= n_steps; ++k) {
        const double cur = discount[k] * flow(states[k]);
        integral += 0.5 * (prev + cur) * dt;
        prev = cur;
      }
      local.add(integral);
    }
    acc[b] = local;
  });
  McAccumulator total;
  for (const auto& a : acc) total.merge(a);
  return total.estimate();
}

struct AssumptionCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const AssumptionCheck* first_failure() const {
    for (const auto& c : checks)
      if (!c.pass) return &c;
    return nullptr;
  }
};

// Numeric symptoms of the standing assumptions for the GBM + capped-power
// configuration. Report only; callers decide whether to abort.
inline AssumptionReport validate_assumptions(const DiffusionModel& model,
                                             const ProfitSpec& spec,
                                             double theta_lo, double theta_hi) {
  if (model.kind() != ModelKind::Gbm || !spec.has_example_family())
    throw std::invalid_argument("validate_assumptions: expects a GBM model with the example flow family");
  if (!(theta_lo < theta_hi))
    throw std::invalid_argument("validate_assumptions: theta_lo must be < theta_hi");

  const double r = spec.r();
  const double beta = spec.beta();
  const double b = model.vol_coef();
  const double mu = model.mu_coef();
  const auto [gp, gm] = gbm_exponents(mu, b, r);
  (void)gp;
  const double delta = beta * mu + 0.5 * b * b * beta * (beta - 1.0);

  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
  };

  AssumptionReport rep;
  auto add = [&](std::string name, bool pass, std::string detail) {
    rep.checks.push_back({std::move(name), pass, std::move(detail)});
  };

  add("beta_in_unit_interval", beta > 0.0 && beta < 1.0, "beta=" + fmt(beta));
  add("m0_gt_r_theta_hi", spec.m0() > r * theta_hi,
      "m0=" + fmt(spec.m0()) + " vs r*theta_hi=" + fmt(r * theta_hi));
  add("cap_flow_gt_r_theta_hi", spec.duopoly_sup() > r * theta_hi,
      "x_cap^beta=" + fmt(spec.duopoly_sup()) + " vs r*theta_hi=" + fmt(r * theta_hi));
  add("gamma_minus_in_range", beta - 1.0 > gm && gm > -1.0,
      "gamma_minus=" + fmt(gm) + " vs (" + fmt(-1.0) + ", " + fmt(beta - 1.0) + ")");
  add("beta_vol_gamma_bound", beta * b * b * std::abs(gm) < 2.0 * r,
      "beta*b^2*|gamma_minus|=" + fmt(beta * b * b * std::abs(gm)) + " vs 2r=" + fmt(2.0 * r));
  add("r_gt_delta", r > delta, "r=" + fmt(r) + " vs delta=" + fmt(delta));
  add("m_min_gt_theta_hi", spec.m0() / r > theta_hi,
      "m_min=" + fmt(spec.m0() / r) + " vs theta_hi=" + fmt(theta_hi));
  return rep;
}

}  // namespace exitduel

#endif  // EXITDUEL_PAYOFFS_HPP
