#pragma once

// Metropolis-filtered HMC / RAHMC transition.

#include "rahmc/dynamics.hpp"
#include "rahmc/rng.hpp"

#include <limits>
#include <string_view>

namespace rahmc {

enum class SamplerKind { HMC, RAHMC };

inline std::string_view to_string(SamplerKind k) { return k == SamplerKind::HMC ? "HMC" : "RAHMC"; }

inline std::optional<SamplerKind> parse_sampler_kind(std::string_view s) {
  if (s == "HMC" || s == "hmc") return SamplerKind::HMC;
  if (s == "RAHMC" || s == "rahmc") return SamplerKind::RAHMC;
  return std::nullopt;
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::RAHMC;
  IntegratorParams params;
  KineticSpec kinetic{1};
  bool reflect_midpoint = false;

  /// Friction actually used: always 0 for HMC.
  double effective_gamma() const { return kind == SamplerKind::HMC ? 0.0 : params.gamma; }
};

struct TransitionRecord {
  bool accepted = false;
  bool blown_up = false;
  double alpha = 0.0;
  double H_current = 0.0;
  /// +inf when the trajectory blew up.
  double H_proposed = 0.0;
};

/// p ~ N(0, M) via the Cholesky factor of the mass matrix.
inline Vector resample_momentum(Rng& rng, const KineticSpec& kin) {
  return kin.cholesky() * standard_normal(rng, kin.dim());
}

/// Metropolis acceptance probability min{1, exp(H_current - H_proposed)}.
inline double acceptance_probability(double H_current, double H_proposed) {
  if (!std::isfinite(H_proposed)) return 0.0;
  const double a = std::exp(H_current - H_proposed);
  return std::isnan(a) ? 0.0 : std::min(1.0, a);
}

/// Deterministic proposal map (before the momentum flip).
template <LogDensityModel Target>
PhaseState propose(const PhaseState& z, const Target& target, const SamplerConfig& cfg) {
  if (cfg.kind == SamplerKind::HMC) return leapfrog_flow(z, target, cfg.kinetic, cfg.params.eps, cfg.params.L);
  return rahmc_flow(z, target, cfg.kinetic, cfg.params, cfg.reflect_midpoint);
}

/// One Markov transition from position q. A trajectory that blows up is a
/// rejected proposal with alpha = 0. The rng is consumed identically on every
/// path (momentum, then one uniform).
template <LogDensityModel Target>
std::pair<Vector, TransitionRecord> transition(const Vector& q, Rng& rng, const Target& target,
                                               const SamplerConfig& cfg) {
  require_dim(q.size(), target.dim(), "transition: state");
  require_dim(cfg.kinetic.dim(), target.dim(), "transition: kinetic spec");
  require(q.allFinite(), "transition: state must be finite");
  cfg.params.validate();

  TransitionRecord rec;
  PhaseState z0{q, resample_momentum(rng, cfg.kinetic)};
  rec.H_current = hamiltonian(z0, target, cfg.kinetic);
  Vector q_new;
  try {
    PhaseState zt = momentum_flip(propose(z0, target, cfg));
    rec.H_proposed = hamiltonian(zt, target, cfg.kinetic);
    rec.alpha = acceptance_probability(rec.H_current, rec.H_proposed);
    q_new = std::move(zt.q);
  } catch (const BlowUpError&) {
    rec.blown_up = true;
    rec.H_proposed = std::numeric_limits<double>::infinity();
    rec.alpha = 0.0;
  }
  const double u = uniform01(rng);
  rec.accepted = u < rec.alpha;
  return {rec.accepted ? q_new : q, rec};
}

}  // namespace rahmc
