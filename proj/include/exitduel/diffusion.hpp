#ifndef EXITDUEL_DIFFUSION_HPP
#define EXITDUEL_DIFFUSION_HPP

// One-dimensional state diffusion dX = mu(X) dt + vol(X) dW on an open
// interval, with exact transition sampling for geometric Brownian motion and
// Euler-Maruyama for user-supplied coefficients. Noise is organised as
// deterministic per-path substreams so that comparisons across models or
// initial states can reuse identical draws.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "exitduel/common.hpp"

namespace exitduel {

enum class ModelKind { Gbm, GeneralSde };

class DiffusionModel {
 public:
  static DiffusionModel gbm(double mu_coef, double vol_coef) {
    if (!(vol_coef > 0.0))
      throw std::invalid_argument("DiffusionModel::gbm: vol_coef must be > 0");
    DiffusionModel m;
    m.kind_ = ModelKind::Gbm;
    m.mu_coef_ = mu_coef;
    m.vol_coef_ = vol_coef;
    m.domain_lo_ = 0.0;
    m.domain_hi_ = kInf;
    return m;
  }

  static DiffusionModel general(std::function<double(double)> mu,
                                std::function<double(double)> vol,
                                double domain_lo, double domain_hi) {
    if (!(domain_lo < domain_hi))
      throw std::invalid_argument("DiffusionModel::general: empty domain");
    DiffusionModel m;
    m.kind_ = ModelKind::GeneralSde;
    m.mu_fn_ = std::move(mu);
    m.vol_fn_ = std::move(vol);
    m.domain_lo_ = domain_lo;
    m.domain_hi_ = domain_hi;
    return m;
  }

  ModelKind kind() const { return kind_; }
  double domain_lo() const { return domain_lo_; }
  double domain_hi() const { return domain_hi_; }
  bool in_domain(double x) const { return x > domain_lo_ && x < domain_hi_; }

  double mu(double x) const {
    return kind_ == ModelKind::Gbm ? mu_coef_ * x : mu_fn_(x);
  }
  double vol(double x) const {
    return kind_ == ModelKind::Gbm ? vol_coef_ * x : vol_fn_(x);
  }

  double mu_coef() const {
    require_gbm();
    return mu_coef_;
  }
  double vol_coef() const {
    require_gbm();
    return vol_coef_;
  }

 private:
  DiffusionModel() = default;
  void require_gbm() const {
    if (kind_ != ModelKind::Gbm)
      throw std::logic_error("DiffusionModel: GBM coefficients requested for a general model");
  }

  ModelKind kind_ = ModelKind::Gbm;
  double mu_coef_ = 0.0;
  double vol_coef_ = 1.0;
  double domain_lo_ = 0.0;
  double domain_hi_ = kInf;
  std::function<double(double)> mu_fn_;
  std::function<double(double)> vol_fn_;
};

struct SamplePath {
  std::vector<double> times;   // uniform grid starting at 0
  std::vector<double> states;  // same length as times
};

// Standard-normal increments on a uniform grid, materialised per path on
// demand. Row (seed, path_index) is always the same sequence, so rerunning a
// comparison with a different model or x0 reuses the draws unchanged.
class NoiseGrid {
 public:
  NoiseGrid(std::uint64_t seed, double step, std::size_t n_steps)
      : seed_(seed), step_(step), n_steps_(n_steps) {
    if (!(step > 0.0)) throw std::invalid_argument("NoiseGrid: step must be > 0");
    if (n_steps == 0) throw std::invalid_argument("NoiseGrid: n_steps must be > 0");
  }

  std::uint64_t seed() const { return seed_; }
  double step() const { return step_; }
  std::size_t n_steps() const { return n_steps_; }
  double horizon() const { return step_ * static_cast<double>(n_steps_); }

  void fill(std::size_t path_index, std::span<double> out) const {
    if (out.size() != n_steps_)
      throw std::invalid_argument("NoiseGrid::fill: span size != n_steps");
    auto rng = substream(seed_, kNoiseTag, path_index);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& z : out) z = normal(rng);
  }

  std::vector<double> increments(std::size_t path_index) const {
    std::vector<double> z(n_steps_);
    fill(path_index, z);
    return z;
  }

  std::vector<double> time_grid() const {
    std::vector<double> t(n_steps_ + 1);
    for (std::size_t k = 0; k <= n_steps_; ++k)
      t[k] = step_ * static_cast<double>(k);
    return t;
  }

 private:
  static constexpr std::uint64_t kNoiseTag = 0x6e6f6973;
  std::uint64_t seed_;
  double step_;
  std::size_t n_steps_;
};

// Core stepping kernel. out[0] = x0 and out.size() must equal z.size() + 1.
// GBM uses the exact log-normal transition, so states stay positive and the
// map x0 -> path is strictly increasing under shared noise. General models
// use Euler-Maruyama and refuse steps that leave the state domain.
inline void simulate_states(const DiffusionModel& model, double x0, double step,
                            std::span<const double> z, std::span<double> out) {
  if (out.size() != z.size() + 1)
    throw std::invalid_argument("simulate_states: out.size() != z.size() + 1");
  if (!model.in_domain(x0))
    throw std::invalid_argument("simulate_states: x0 outside the state domain");
  out[0] = x0;
  if (model.kind() == ModelKind::Gbm) {
    const double b = model.vol_coef();
    const double drift = (model.mu_coef() - 0.5 * b * b) * step;
    const double diff = b * std::sqrt(step);
    double x = x0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      x *= std::exp(drift + diff * z[k]);
      out[k + 1] = x;
    }
  } else {
    const double sqrt_step = std::sqrt(step);
    double x = x0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      x += model.mu(x) * step + model.vol(x) * sqrt_step * z[k];
      if (!model.in_domain(x))
        throw std::runtime_error("simulate_states: Euler step left the state domain at step " +
                                 std::to_string(k + 1));
      out[k + 1] = x;
    }
  }
}

inline SamplePath simulate_path(const DiffusionModel& model, double x0,
                                double horizon, const NoiseGrid& noise,
                                std::size_t path_index) {
  const double expected = noise.horizon();
  if (std::abs(horizon - expected) > 1e-9 * std::max(1.0, expected))
    throw std::invalid_argument("simulate_path: horizon != noise.step * noise.n_steps");
  SamplePath path;
  path.times = noise.time_grid();
  path.states.resize(noise.n_steps() + 1);
  std::vector<double> z = noise.increments(path_index);
  simulate_states(model, x0, noise.step(), z, path.states);
  return path;
}

// Roots of (1/2) b^2 g (g - 1) + mu g - r = 0, returned as
// (gamma_plus, gamma_minus). For mu < 0 these satisfy
// gamma_plus > 1 > 0 > gamma_minus.
inline std::pair<double, double> gbm_exponents(double mu_coef, double vol_coef,
                                               double r) {
  if (!(vol_coef > 0.0))
    throw std::invalid_argument("gbm_exponents: vol_coef must be > 0");
  if (!(r > 0.0)) throw std::invalid_argument("gbm_exponents: r must be > 0");
  const double b2 = vol_coef * vol_coef;
  const double h = 0.5 - mu_coef / b2;
  const double root = std::sqrt(h * h + 2.0 * r / b2);
  return {h + root, h - root};
}

}  // namespace exitduel

#endif  // EXITDUEL_DIFFUSION_HPP
