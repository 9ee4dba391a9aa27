#pragma once

#include "rahmc/kernel.hpp"
#include "rahmc/tuning.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rahmc {

/// Post-warm-up output of a single chain.
struct Chain {
  Matrix samples;  // n x d
  std::vector<bool> accepted;
  std::vector<double> alpha;
  std::vector<double> H_current;
  std::vector<double> H_proposed;
  double acceptance_rate = 0.0;
  long blowups = 0;
  std::uint64_t seed = 0;
  std::uint64_t chain_index = 0;
  long warmup = 0;
  std::string target_name;
  /// Parameters used for the kept samples (tuned values when tuning ran).
  SamplerConfig config;
  std::optional<TuneResult> tuning;

  Eigen::Index size() const noexcept { return samples.rows(); }
  Eigen::Index dim() const noexcept { return samples.cols(); }
};

struct RunOptions {
  long n = 1000;
  long warmup = 0;
  std::uint64_t seed = 0;
  std::uint64_t chain_index = 0;
  /// Dual averaging during warm-up when set.
  std::optional<TunerSettings> tuner;
};

/// Runs warm-up then `n` recorded transitions from `initial`. Without a tuner
/// the warm-up uses the fixed parameters in `cfg`; with one, the tuned values
/// are frozen for the recorded phase. A chain never aborts on rejection or on
/// a blown-up trajectory.
template <class Target>
  requires LogDensityModel<Target>
Chain run_chain(const Vector& initial, const Target& target, SamplerConfig cfg, const RunOptions& opt) {
  require(opt.n >= 1, "run_chain: n must be >= 1");
  require(opt.warmup >= 0, "run_chain: warmup must be >= 0");
  require_dim(initial.size(), target.dim(), "run_chain: initial state");
  require(!opt.tuner || opt.warmup >= 1, "run_chain: tuning needs warmup >= 1");

  Rng rng = make_rng(opt.seed, opt.chain_index);
  Chain ch;
  ch.seed = opt.seed;
  ch.chain_index = opt.chain_index;
  ch.warmup = opt.warmup;
  if constexpr (requires { target.name(); }) ch.target_name = target.name();

  Vector q = initial;
  if (opt.tuner) {
    TuneResult tr = tune(cfg.kind, target, cfg.kinetic, q, opt.warmup, *opt.tuner, rng, cfg.reflect_midpoint);
    cfg.params = {tr.eps, tr.L, tr.gamma};
    q = tr.q;
    ch.tuning = std::move(tr);
  } else {
    cfg.params.validate();
    for (long i = 0; i < opt.warmup; ++i) q = transition(q, rng, target, cfg).first;
  }
  if (cfg.kind == SamplerKind::HMC) cfg.params.gamma = 0.0;

  const auto n = static_cast<std::size_t>(opt.n);
  ch.samples.resize(opt.n, target.dim());
  ch.accepted.reserve(n);
  ch.alpha.reserve(n);
  ch.H_current.reserve(n);
  ch.H_proposed.reserve(n);
  long acc = 0;
  for (long i = 0; i < opt.n; ++i) {
    auto [next, rec] = transition(q, rng, target, cfg);
    q = std::move(next);
    ch.samples.row(i) = q.transpose();
    ch.accepted.push_back(rec.accepted);
    ch.alpha.push_back(rec.alpha);
    ch.H_current.push_back(rec.H_current);
    ch.H_proposed.push_back(rec.H_proposed);
    acc += rec.accepted ? 1 : 0;
    ch.blowups += rec.blown_up ? 1 : 0;
  }
  ch.acceptance_rate = static_cast<double>(acc) / static_cast<double>(opt.n);
  ch.config = std::move(cfg);
  return ch;
}

/// Default starting point: q0 ~ N(0, I) from the chain's own stream offset.
inline Vector default_initial_state(Eigen::Index d, std::uint64_t seed, std::uint64_t chain_index) {
  Rng rng = make_rng(seed ^ 0x5bd1e995ULL, chain_index);
  return standard_normal(rng, d);
}

}  // namespace rahmc
