#pragma once

// Nesterov dual averaging over x = (log eps, log gamma), driving the
// Metropolis acceptance towards a target delta with the trajectory time
// T = eps * L held fixed.

#include "rahmc/kernel.hpp"

#include <array>

namespace rahmc {

/// Nearest even integer, at least 2.
inline long round_even(double x) {
  if (!(x > 2.0)) return 2;
  const double r = 2.0 * std::round(x / 2.0);
  if (r >= 9.0e15) return static_cast<long>(9.0e15);
  return std::max(2L, static_cast<long>(r));
}

struct DualAveragingState {
  using Vec2 = std::array<double, 2>;

  Vec2 x{0.0, 0.0};
  Vec2 x_bar{0.0, 0.0};
  Vec2 g_sum{0.0, 0.0};
  long t = 0;
  Vec2 mu{0.0, 0.0};
  double omega = 0.05;
  double t0 = 10.0;
  double k = 0.75;
  double delta = 0.6;
  double T = 15.0;

  void validate() const {
    require(t >= 0, "dual averaging: t >= 0");
    require(omega > 0.0, "dual averaging: omega > 0");
    require(t0 >= 0.0, "dual averaging: t0 >= 0");
    require(k > 0.5 && k <= 1.0, "dual averaging: k in (0.5, 1]");
    require(delta > 0.0 && delta < 1.0, "dual averaging: delta in (0, 1)");
    require(T > 0.0, "dual averaging: T > 0");
  }
};

/// One dual-averaging step with subgradient g = (f, f).
inline DualAveragingState da_update(DualAveragingState s, double f) {
  s.t += 1;
  const double t = static_cast<double>(s.t);
  const double shrink = std::sqrt(t) / s.omega / (s.t0 + t);
  const double eta = std::pow(t, -s.k);
  for (int i = 0; i < 2; ++i) {
    s.g_sum[i] += f;
    s.x[i] = s.mu[i] - shrink * s.g_sum[i];
    s.x_bar[i] = eta * s.x[i] + (1.0 - eta) * s.x_bar[i];
  }
  return s;
}

/// Initial step size by doubling/halving from eps = 1 until the one-step
/// leapfrog acceptance crosses 0.5. Throws TunerError after 100 moves without
/// a crossing (e.g. a flat potential, whose acceptance is 1 at every eps).
template <LogDensityModel Target>
double init_epsilon(const Target& target, const KineticSpec& kin, const Vector& q0, Rng& rng) {
  require(q0.allFinite(), "init_epsilon: q0 must be finite");
  const PhaseState z{q0, resample_momentum(rng, kin)};
  const double h0 = hamiltonian(z, target, kin);
  auto ratio = [&](double eps) {
    try {
      const double h1 = hamiltonian(leapfrog_step(z, target, kin, eps), target, kin);
      const double r = std::exp(h0 - h1);
      return std::isnan(r) ? 0.0 : r;
    } catch (const BlowUpError&) {
      return 0.0;
    }
  };
  double eps = 1.0;
  double r = ratio(eps);
  const double a = r > 0.5 ? 1.0 : -1.0;
  for (int i = 0; i < 100; ++i) {
    if (!(std::pow(r, a) > std::pow(2.0, -a))) return eps;
    eps *= std::pow(2.0, a);
    r = ratio(eps);
  }
  throw TunerError("init_epsilon: no acceptance crossing after 100 doublings/halvings (eps=" + std::to_string(eps) +
                   ")");
}

struct TunerSettings {
  double delta = 0.6;
  /// Trajectory time T = eps * L.
  double T = 15.0;
  double gamma0 = 1.0;
  double omega = 0.05;
  double t0 = 10.0;
  double k = 0.75;
  /// Guard on L = T / eps while eps is being explored.
  long max_L = 10000;

  void validate() const {
    require(delta > 0.0 && delta < 1.0, "tuner: delta must lie in (0, 1)");
    require(T > 0.0 && std::isfinite(T), "tuner: T must be positive");
    require(gamma0 > 0.0, "tuner: gamma0 must be positive");
    require(max_L >= 2, "tuner: max_L >= 2");
  }
};

struct TuneResult {
  double eps = 0.0;
  double gamma = 0.0;
  long L = 2;
  double eps0 = 0.0;
  double delta = 0.0;
  double T = 0.0;
  double acceptance_during_warmup = 0.0;
  long blowups = 0;
  /// Chain position after warm-up.
  Vector q;
  DualAveragingState state;
};

inline long steps_for(double T, double eps, long max_L) { return std::min(max_L, round_even(T / eps)); }

/// Warm-up with dual averaging. For HMC only the step size is adapted and
/// gamma is reported as 0.
template <LogDensityModel Target>
TuneResult tune(SamplerKind kind, const Target& target, const KineticSpec& kin, const Vector& q0, long warmup,
                const TunerSettings& ts, Rng& rng, bool reflect_midpoint = false) {
  require(warmup >= 1, "tune: warmup must be >= 1");
  ts.validate();
  require_dim(q0.size(), target.dim(), "tune: q0");

  TuneResult res;
  res.eps0 = init_epsilon(target, kin, q0, rng);
  res.delta = ts.delta;
  res.T = ts.T;

  DualAveragingState s;
  s.mu = {std::log(10.0 * res.eps0), std::log(10.0 * ts.gamma0)};
  s.x = {std::log(res.eps0), std::log(ts.gamma0)};
  s.x_bar = s.x;
  s.omega = ts.omega;
  s.t0 = ts.t0;
  s.k = ts.k;
  s.delta = ts.delta;
  s.T = ts.T;
  s.validate();

  SamplerConfig cfg{kind, {}, kin, reflect_midpoint};
  Vector q = q0;
  double alpha_sum = 0.0;
  for (long i = 0; i < warmup; ++i) {
    cfg.params.eps = std::exp(s.x[0]);
    cfg.params.gamma = kind == SamplerKind::HMC ? 0.0 : std::exp(s.x[1]);
    cfg.params.L = steps_for(ts.T, cfg.params.eps, ts.max_L);
    auto [next, rec] = transition(q, rng, target, cfg);
    q = std::move(next);
    alpha_sum += rec.alpha;
    res.blowups += rec.blown_up ? 1 : 0;
    s = da_update(s, ts.delta - rec.alpha);
  }
  if (res.blowups == warmup) {
    throw TunerError("tune: every warm-up trajectory blew up (last eps=" + std::to_string(std::exp(s.x[0])) +
                     ", gamma=" + std::to_string(std::exp(s.x[1])) + ")");
  }
  res.eps = std::exp(s.x_bar[0]);
  res.gamma = kind == SamplerKind::HMC ? 0.0 : std::exp(s.x_bar[1]);
  res.L = steps_for(ts.T, res.eps, ts.max_L);
  res.acceptance_during_warmup = alpha_sum / static_cast<double>(warmup);
  res.q = std::move(q);
  res.state = s;
  return res;
}

template <LogDensityModel Target>
TuneResult tune_rahmc(const Target& target, const KineticSpec& kin, const Vector& q0, long warmup,
                      const TunerSettings& ts, Rng& rng) {
  return tune(SamplerKind::RAHMC, target, kin, q0, warmup, ts, rng);
}

}  // namespace rahmc
