#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "exitduel/single_player.hpp"

using namespace exitduel;

namespace {

struct Setup {
  ProfitSpec spec = ProfitSpec::example(1.0, 0.5, 1000.0, 2.0);
  ResolventPair res =
      ResolventPair::from_example(ExampleResolvent::build(spec, -0.5, 1.0));
  std::function<double(double)> phi = [](double x) { return std::pow(x, 1.0 - std::sqrt(3.0)); };
  ThresholdTable table{spec, res, phi, 0.5, 1.5};
};

Setup& setup() {
  static Setup s;
  return s;
}

}  // namespace

TEST_CASE("critical level solves D(x) = r theta") {
  auto& s = setup();
  const double c = c_critical(1.5, s.spec);
  REQUIRE(c == Catch::Approx(2.25).margin(1e-10));
  REQUIRE(std::abs(s.spec.duopoly(c) - 1.5) < 1e-10);

  // cap boundary: r theta equal to the flow supremum
  const double theta_cap = s.spec.duopoly_sup() / s.spec.r();
  REQUIRE(c_critical(theta_cap, s.spec) == Catch::Approx(1000.0).epsilon(1e-9));
  // beyond it there is no finite solution
  REQUIRE(c_critical(theta_cap * 1.01, s.spec) == kInf);
}

TEST_CASE("a_theta vanishes where the resolvent equals the type") {
  auto& s = setup();
  const double theta = s.res.d(1.3);
  REQUIRE(a_theta(1.3, theta, s.res, s.phi) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("a_theta increases below the boundary and peaks at it") {
  auto& s = setup();
  for (double theta : {0.6, 1.0, 1.4}) {
    const double alpha = s.table.alpha(theta);
    double prev = -kInf;
    for (int i = 1; i <= 200; ++i) {
      const double x = alpha * i / 200.0;
      const double v = a_theta(x, theta, s.res, s.phi);
      REQUIRE(v >= prev);
      prev = v;
    }
    // dense scan oracle: no grid point beats the solved maximiser
    const double peak = a_theta(alpha, theta, s.res, s.phi);
    const double cap = c_critical(theta, s.spec);
    double best = -kInf;
    for (int i = 1; i <= 10000; ++i) {
      best = std::max(best, a_theta(cap * i / 10000.0, theta, s.res, s.phi));
    }
    REQUIRE(peak >= best - 1e-6 * std::abs(best));
  }
}

TEST_CASE("alpha is increasing and stays below the critical level") {
  auto& s = setup();
  REQUIRE(s.table.alpha(0.5) < s.table.alpha(1.0));
  REQUIRE(s.table.alpha(1.0) < s.table.alpha(1.5));
  auto thetas = s.table.thetas();
  auto alphas = s.table.alphas();
  REQUIRE(thetas.size() == 201);
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    if (i > 0) REQUIRE(alphas[i] > alphas[i - 1]);
    REQUIRE(alphas[i] <= thetas[i] * thetas[i] + 1e-9);  // c(theta) = theta^2 here
  }
}

TEST_CASE("tightening the solver tolerance barely moves alpha") {
  auto& s = setup();
  for (double theta : {0.7, 1.2}) {
    const double coarse = solve_alpha(theta, s.spec, s.res, s.phi, {1e-6, 128});
    const double fine = solve_alpha(theta, s.spec, s.res, s.phi, {1e-7, 128});
    REQUIRE(std::abs(coarse - fine) < 1e-6);
  }
}

TEST_CASE("a profile without an interior maximum is rejected") {
  // with a growing "decreasing solution" the objective only falls, so the
  // coarse scan peaks at the left edge and the solver refuses to pick a
  // threshold
  auto spec = ProfitSpec::custom([](double x) { return std::min(x, 10.0); },
                                 [](double x) { return std::min(x, 10.0) + 3.0; },
                                 10.0, 1.0);
  auto res = ResolventPair::custom([](double) { return 0.0; },
                                   [](double) { return 3.0; }, 3.0);
  auto bad_phi = [](double x) { return std::exp(x); };
  REQUIRE_THROWS_AS(solve_alpha(1.0, spec, res, bad_phi), std::runtime_error);
}

TEST_CASE("alpha_inv inverts the interpolated boundary") {
  auto& s = setup();
  for (double theta : {0.55, 0.8, 1.0, 1.3, 1.5}) {
    const double x = s.table.alpha(theta);
    REQUIRE(s.table.alpha_inv(x) == Catch::Approx(theta).margin(1e-9));
  }
  // clamped outside the tabulated range
  REQUIRE(s.table.alpha_inv(1e-6) == Catch::Approx(0.5));
  REQUIRE(s.table.alpha_inv(100.0) == Catch::Approx(s.table.theta_grid_hi()));
  REQUIRE(s.table.theta_grid_hi() >= 1.5 + 0.25 - 1e-9);
}

TEST_CASE("single-player value function") {
  auto& s = setup();
  for (double theta : {0.6, 1.0, 1.4}) {
    const double alpha = s.table.alpha(theta);
    REQUIRE(s.table.u(0.5 * alpha, theta) == theta);
    REQUIRE(s.table.u(alpha, theta) == theta);
    for (double f : {1.05, 1.5, 3.0, 10.0}) {
      const double u = s.table.u(f * alpha, theta);
      REQUIRE(u > theta);
      REQUIRE(u >= s.res.d(f * alpha) - 1e-12);
    }
  }
}

TEST_CASE("value function is continuous in the type") {
  auto& s = setup();
  for (double x : {0.4, 1.0, 2.5}) {
    double prev = s.table.u(x, 0.5);
    double max_jump = 0.0;
    for (int i = 1; i <= 400; ++i) {
      const double theta = 0.5 + i / 400.0;
      const double u = s.table.u(x, theta);
      max_jump = std::max(max_jump, std::abs(u - prev));
      prev = u;
    }
    REQUIRE(max_jump < 0.02);  // ~ Lipschitz step on a 1/400 grid
  }
}

TEST_CASE("Monte-Carlo policy value confirms the analytic u") {
  auto& s = setup();
  auto model = DiffusionModel::gbm(-0.5, 1.0);
  const double theta = 1.0;
  const double alpha = s.table.alpha(theta);
  const double x0 = 2.0 * alpha;
  NoiseGrid noise(77, 1e-3, 10000);
  auto est = threshold_policy_value(model, s.spec, x0, theta, alpha, 4000, noise);
  REQUIRE(std::abs(est.estimate - s.table.u(x0, theta)) <= 3.0 * est.std_error);
}

TEST_CASE("perturbing the threshold does not beat it") {
  auto& s = setup();
  auto model = DiffusionModel::gbm(-0.5, 1.0);
  const double theta = 1.0;
  const double alpha = s.table.alpha(theta);
  const double x0 = 2.72;
  NoiseGrid noise(78, 1e-3, 10000);
  const std::size_t n = 4000;
  auto at = threshold_policy_value(model, s.spec, x0, theta, alpha, n, noise);
  for (double f : {0.95, 1.05}) {
    auto perturbed = threshold_policy_value(model, s.spec, x0, theta, f * alpha, n, noise);
    const double pooled = std::sqrt(at.std_error * at.std_error +
                                    perturbed.std_error * perturbed.std_error);
    REQUIRE(perturbed.estimate - at.estimate <= 3.0 * pooled);
  }
}
