#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "exitduel/equilibrium.hpp"

using namespace exitduel;

namespace {

GameModel paper_game() {
  auto model = DiffusionModel::gbm(-0.5, 1.0);
  auto spec = ProfitSpec::example(1.0, 0.5, 1000.0, 2.0);
  auto res = ResolventPair::from_example(ExampleResolvent::build(spec, -0.5, 1.0));
  auto dist = TypeDistribution::uniform(0.5, 1.5);
  return GameModel::build(model, spec, res, dist);
}

GameModel& game() {
  static GameModel g = paper_game();
  return g;
}

SamplePath flat_path(double level, double dt, std::size_t n_steps) {
  SamplePath p;
  p.times.resize(n_steps + 1);
  p.states.assign(n_steps + 1, level);
  for (std::size_t k = 0; k <= n_steps; ++k) p.times[k] = dt * k;
  return p;
}

}  // namespace

TEST_CASE("uniform reparametrisation basics") {
  auto dist = TypeDistribution::uniform(0.5, 1.5);
  REQUIRE(dist.big_a(1.5) == 0.0);
  REQUIRE(dist.big_y(0.0) == 1.5);
  REQUIRE(dist.big_a(1.0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  REQUIRE(dist.big_a(0.5) == kInf);
  REQUIRE_THROWS_AS(dist.big_a(0.4), std::domain_error);
  REQUIRE_THROWS_AS(dist.big_y(-0.1), std::domain_error);

  for (int i = 0; i <= 100; ++i) {
    const double y = 0.5 + 1e-6 + (1.0 - 2e-6) * i / 100.0;
    REQUIRE(dist.big_y(dist.big_a(y)) == Catch::Approx(y).margin(1e-12));
  }
  for (int i = 0; i <= 100; ++i) {
    const double u = 0.01 + 0.99 * i / 100.0;
    REQUIRE(dist.cdf(dist.quantile(u)) == Catch::Approx(u).margin(1e-12));
  }
}

TEST_CASE("tabulated distribution round trips") {
  std::vector<double> t{0.5, 0.8, 1.1, 1.5};
  std::vector<double> F{0.0, 0.4, 0.7, 1.0};
  auto dist = TypeDistribution::tabulated(t, F);
  for (int i = 1; i < 20; ++i) {
    const double u = i / 20.0;
    REQUIRE(dist.cdf(dist.quantile(u)) == Catch::Approx(u).margin(1e-12));
  }
  REQUIRE(dist.big_y(0.0) == Catch::Approx(1.5));
}

TEST_CASE("generator switches off above the boundary") {
  auto& g = game();
  REQUIRE(g.lambda(2.0, 1.0) == 0.0);  // alpha(1) ~ 0.667
  REQUIRE(g.lambda(0.5, 1.0) > 0.0);
  // zero numerator at the critical level when it is inside the action region
  const double y = 1.0;
  const double x = 0.5;
  const double expected = (g.spec.r() * y - g.spec.duopoly(x)) / (g.res.m(x) - y);
  REQUIRE(g.lambda(x, y) == Catch::Approx(expected).epsilon(1e-14));
}

TEST_CASE("generator identity in the action region") {
  auto& g = game();
  double worst = 0.0;
  for (double theta : {0.6, 1.0, 1.4}) {
    const double alpha = g.table.alpha(theta);
    for (int i = 1; i <= 100; ++i) {
      const double x = alpha * (i / 100.0);  // factor of at most one, exactly
      const double resid = g.spec.duopoly(x) - g.spec.r() * theta +
                           g.lambda(x, theta) * (g.res.m(x) - theta);
      worst = std::max(worst, std::abs(resid));
    }
  }
  REQUIRE(worst < 1e-12);
}

TEST_CASE("generator bound and monotonicity") {
  auto& g = game();
  const double cap = g.lambda_max();
  REQUIRE(cap == Catch::Approx(3.0).epsilon(1e-12));
  for (int ix = 1; ix <= 50; ++ix) {
    const double x = 3.0 * ix / 50.0;
    double prev_in_a = kInf;
    for (int ia = 0; ia <= 50; ++ia) {
      const double a = 3.0 * ia / 50.0;
      const double v = g.lambda(x, g.dist.big_y(a));
      REQUIRE(v >= 0.0);
      REQUIRE(v <= cap);
      REQUIRE(v <= prev_in_a + 1e-12);  // decreasing in a
      prev_in_a = v;
    }
  }
  // decreasing in x at fixed a
  for (double a : {0.0, 0.3, 1.0}) {
    const double y = g.dist.big_y(a);
    double prev = kInf;
    for (int ix = 1; ix <= 80; ++ix) {
      const double x = 2.5 * ix / 80.0;
      const double v = g.lambda(x, y);
      REQUIRE(v <= prev + 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("the generator jumps only at the exit boundary") {
  auto& g = game();
  for (double y : {0.7, 1.0, 1.3}) {
    const double alpha = g.table.alpha(y);
    const double h = 1e-4;
    for (int i = 1; i < 300; ++i) {
      const double x = 2.0 * i / 300.0;
      const double jump = std::abs(g.lambda(x + h, y) - g.lambda(x, y));
      if (std::abs(x - alpha) > 2.0 * h) {
        REQUIRE(jump < 1e-2);  // smooth away from the boundary
      }
    }
    // and it does jump there
    REQUIRE(g.lambda(alpha - 1e-9, y) - g.lambda(alpha + 1e-9, y) > 0.05);
  }
}

TEST_CASE("finite-difference slope of the raw rate in y") {
  auto& g = game();
  const double x = 0.1;  // below alpha(theta_lo) ~ 0.167
  const double bound = g.spec.r() * g.res.m_min() /
                       ((g.res.m_min() - 1.5) * (g.res.m_min() - 1.5));
  const double h = 1e-6;
  for (int i = 1; i < 40; ++i) {
    const double y = 0.5 + i / 40.0;
    const double slope = (g.ell(x, y + h) - g.ell(x, y - h)) / (2.0 * h);
    REQUIRE(slope > 0.0);
    REQUIRE(slope <= bound * (1.0 + 1e-6));
  }
}

TEST_CASE("smoothed rate branches") {
  auto& g = game();
  const double eps = 0.02;
  // inside the action region the smoothing is inactive
  const double x_in = 0.4;
  const double yb = g.table.alpha_inv(x_in);
  for (double y : {yb, yb + 0.05, 1.5}) {
    REQUIRE(g.lambda_eps(x_in, y, eps) == Catch::Approx(g.ell(x_in, y)).epsilon(1e-14));
    REQUIRE(g.lambda_eps(x_in, y, eps) ==
            Catch::Approx(g.lambda_eps(x_in, y, eps * 0.5)).epsilon(1e-14));
  }
  // beyond one ramp width the smoothed rate is exactly zero
  REQUIRE(g.lambda_eps(x_in, yb - eps, eps) == 0.0);
  REQUIRE(g.lambda_eps(x_in, yb - eps - 1e-9, eps) == 0.0);
  // ramp interpolates the boundary value
  const double mid = g.lambda_eps(x_in, yb - 0.5 * eps, eps);
  REQUIRE(mid == Catch::Approx(0.5 * g.ell(x_in, yb)).epsilon(1e-10));
}

TEST_CASE("smoothed rate dominates the generator and shrinks with eps") {
  auto& g = game();
  for (int ix = 1; ix <= 50; ++ix) {
    const double x = 2.5 * ix / 50.0;
    for (int iy = 0; iy <= 50; ++iy) {
      const double y = 0.5 + iy / 50.0;
      const double fine = g.lambda_eps(x, y, 0.01);
      const double coarse = g.lambda_eps(x, y, 0.02);
      REQUIRE(fine <= coarse + 1e-14);
      REQUIRE(coarse + 1e-14 >= g.lambda(x, y));
    }
  }
}

TEST_CASE("belief stays flat when the path clears the action region") {
  auto& g = game();
  // alpha(theta_hi + margin) < 2.1; a flat path at 2.6 clears every ramp
  auto path = flat_path(2.6, 1e-3, 500);
  auto belief = integrate_belief(g, path, 0.0);
  for (double a : belief.a_values) REQUIRE(a == 0.0);
  auto belief2 = integrate_belief(g, path, 0.4);
  for (double a : belief2.a_values) REQUIRE(a == 0.4);
}

TEST_CASE("belief ladder diagnostics and guards") {
  auto& g = game();
  auto model_path = simulate_path(g.model, 2.72, 2.0, NoiseGrid(5, 1e-3, 2000), 0);
  auto belief = integrate_belief(g, model_path, 0.0);
  REQUIRE(belief.converged);
  REQUIRE(belief.epsilon_used == Catch::Approx(0.005));
  const double cap_step = g.lambda_max() * 1e-3 * (1.0 + 1e-9);
  for (std::size_t k = 1; k < belief.a_values.size(); ++k) {
    const double inc = belief.a_values[k] - belief.a_values[k - 1];
    REQUIRE(inc >= 0.0);
    REQUIRE(inc <= cap_step);
  }
  const double bad_ladder[] = {0.01, 0.02};
  REQUIRE_THROWS_AS(integrate_belief(g, model_path, 0.0, bad_ladder),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(integrate_belief(g, model_path, -0.1), std::invalid_argument);
}

TEST_CASE("belief is Lipschitz in its starting point") {
  auto& g = game();
  NoiseGrid noise(6, 1e-3, 2000);
  const double slack = 2.0 * g.lambda_max() * 1e-3;
  for (std::size_t i = 0; i < 20; ++i) {
    auto path = simulate_path(g.model, 2.0, 2.0, noise, i);
    auto lo = integrate_belief(g, path, 0.0);
    auto hi = integrate_belief(g, path, 0.3);
    for (std::size_t k = 0; k < lo.a_values.size(); ++k) {
      const double gap = hi.a_values[k] - lo.a_values[k];
      REQUIRE(gap >= -slack);
      REQUIRE(gap <= 0.3 + slack);
    }
  }
}

TEST_CASE("belief is monotone in the initial state under shared noise") {
  auto& g = game();
  NoiseGrid noise(8, 1e-3, 2000);
  const double slack = g.lambda_max() * 1e-3;
  for (std::size_t i = 0; i < 20; ++i) {
    auto path_lo = simulate_path(g.model, 2.2, 2.0, noise, i);
    auto path_hi = simulate_path(g.model, 2.72, 2.0, noise, i);
    auto belief_lo = integrate_belief(g, path_lo, 0.0);
    auto belief_hi = integrate_belief(g, path_hi, 0.0);
    for (std::size_t k = 0; k < belief_lo.a_values.size(); ++k)
      REQUIRE(belief_lo.a_values[k] >= belief_hi.a_values[k] - slack);
  }
}

TEST_CASE("exit times at the boundary type") {
  auto& g = game();
  const double alpha_top = g.table.alpha(1.5);

  // starting inside the action region both forms fire immediately
  auto inside = flat_path(0.9 * alpha_top, 1e-3, 200);
  auto belief_in = integrate_belief(g, inside, 0.0);
  auto t_in = exit_time(1.5, belief_in, inside, g.dist, g.table);
  REQUIRE(t_in.tau_a == 0.0);
  REQUIRE(t_in.tau_rect == 0.0);

  // starting above it, the rectangular form fires when X first dips under
  NoiseGrid noise(10, 1e-3, 4000);
  for (std::size_t i = 0; i < 10; ++i) {
    auto path = simulate_path(g.model, 2.72, 4.0, noise, i);
    auto belief = integrate_belief(g, path, 0.0);
    auto t = exit_time(1.5, belief, path, g.dist, g.table);
    std::size_t k_hit = kNeverIndex;
    for (std::size_t k = 0; k < path.states.size(); ++k)
      if (path.states[k] <= alpha_top) {
        k_hit = k;
        break;
      }
    if (k_hit == kNeverIndex) {
      REQUIRE(t.tau_rect == kInf);
    } else {
      REQUIRE(t.tau_rect == path.times[k_hit]);
    }
  }

  // the bottom type never exits
  auto path = simulate_path(g.model, 2.72, 4.0, noise, 0);
  auto belief = integrate_belief(g, path, 0.0);
  auto t_bottom = exit_time(0.5, belief, path, g.dist, g.table);
  REQUIRE(t_bottom.tau_a == kInf);
  REQUIRE(t_bottom.tau_rect == kInf);
}

TEST_CASE("the two exit-time forms rarely disagree") {
  auto& g = game();
  NoiseGrid noise(12, 1e-3, 8000);
  std::size_t both = 0, close = 0;
  for (std::size_t i = 0; i < 400; ++i) {
    auto path = simulate_path(g.model, 2.72, 8.0, noise, i);
    auto belief = integrate_belief(g, path, 0.0);
    for (double theta : {0.8, 1.2}) {
      auto t = exit_time(theta, belief, path, g.dist, g.table);
      if (t.tau_a < kInf && t.tau_rect < kInf) {
        ++both;
        if (std::abs(t.tau_a - t.tau_rect) <= 2e-3 + 1e-12) ++close;
      }
    }
  }
  REQUIRE(both > 300);
  REQUIRE(static_cast<double>(close) >= 0.95 * static_cast<double>(both));
}

TEST_CASE("exit times are monotone in the type") {
  auto& g = game();
  NoiseGrid noise(13, 1e-3, 6000);
  for (std::size_t i = 0; i < 10; ++i) {
    auto path = simulate_path(g.model, 2.72, 6.0, noise, i);
    auto belief = integrate_belief(g, path, 0.0);
    double prev_rect = kInf, prev_a = kInf;
    for (double theta : {0.6, 0.8, 1.0, 1.2, 1.4}) {
      auto t = exit_time(theta, belief, path, g.dist, g.table);
      REQUIRE(t.tau_a <= prev_a);
      REQUIRE(t.tau_rect <= prev_rect);
      prev_a = t.tau_a;
      prev_rect = t.tau_rect;
    }
  }
}

TEST_CASE("belief never decreases and Y never increases along a game") {
  auto& g = game();
  auto path = simulate_path(g.model, 2.72, 2.0, NoiseGrid(14, 1e-3, 2000), 1);
  auto belief = integrate_belief(g, path, 0.0);
  double prev_y = g.dist.theta_hi();
  for (std::size_t k = 0; k < belief.a_values.size(); ++k) {
    const double y = g.dist.big_y(belief.a_values[k]);
    REQUIRE(y <= prev_y + 1e-15);
    REQUIRE(y > g.dist.theta_lo());
    REQUIRE(y <= g.dist.theta_hi());
    prev_y = y;
  }
}

TEST_CASE("equal types exit together and split the boundary payoff") {
  auto& g = game();
  auto o = simulate_game(g, 2.72, 1.2, 1.2, 99, 6.0, 1e-3);
  REQUIRE(o.exit_time_1 == o.exit_time_2);
  if (o.exit_time_1 < kInf) REQUIRE(o.first_exiter == FirstExiter::Both);

  // both at theta_hi from inside the region: immediate exit, payoffs 2*theta
  const double x0 = 0.9 * g.table.alpha(1.5);
  auto tie = simulate_game(g, x0, 1.5, 1.5, 99, 1.0, 1e-3);
  REQUIRE(tie.exit_time_1 == 0.0);
  REQUIRE(tie.exit_time_2 == 0.0);
  REQUIRE(tie.first_exiter == FirstExiter::Both);
  REQUIRE(tie.payoff_1 + tie.payoff_2 == Catch::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("the higher type exits first") {
  auto& g = game();
  int decided = 0;
  for (std::uint64_t seed = 200; seed < 240; ++seed) {
    auto o = simulate_game(g, 2.72, 1.4, 1.0, seed, 6.0, 1e-3);
    if (o.exit_time_1 < kInf) {
      ++decided;
      REQUIRE(o.exit_time_1 < o.exit_time_2);
      REQUIRE(o.first_exiter == FirstExiter::One);
      // the stayer banks the monopoly value at the exit state
      REQUIRE(o.payoff_2 > o.payoff_1);
    }
  }
  REQUIRE(decided > 20);
}
