#pragma once

// Executable checks of the structural properties of the RAHMC integrator and
// kernel: reversibility, volume preservation, second order accuracy, the
// friction energy rate, energy drift, the HMC mode-transition bound, and
// end-to-end distributional correctness.

#include "rahmc/diagnostics.hpp"
#include "rahmc/samplers.hpp"

#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace rahmc {

struct VerificationReport {
  std::string name;
  bool pass = false;
  std::map<std::string, double> measured;
  std::map<std::string, double> thresholds;
  std::map<std::string, std::vector<double>> series;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> notes;
  double runtime_seconds = 0.0;
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline long uniform_int(Rng& rng, long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); }

/// Starting position: a draw from the target when it has a direct sampler,
/// otherwise N(0, I).
inline Vector random_position(const TargetDistribution& target, Rng& rng) {
  if (target.has_exact_sampler()) return target.exact_sample(rng, 1).row(0).transpose();
  return standard_normal(rng, target.dim());
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct InvolutionOptions {
  double eps_min = 1e-3;
  double eps_max = 0.1;
  double gamma_min = 0.0;
  double gamma_max = 1.0;
  long L_max = 100;
  /// Pins L for every trial; odd values are rounded up to even.
  std::optional<long> fixed_L;
  std::optional<double> fixed_eps;
  std::optional<double> fixed_gamma;
  double threshold = 1e-8;
};

/// Round trip (flip . F)^2 (z) against z over random (z, eps, gamma, L).
inline VerificationReport check_involution(const TargetDistribution& target, long trials, Rng& rng,
                                           const InvolutionOptions& opt = {}) {
  require(trials >= 1, "check_involution: trials >= 1");
  detail::Stopwatch sw;
  VerificationReport rep;
  rep.name = "involution";
  const KineticSpec kin(target.dim());
  if (opt.fixed_L && *opt.fixed_L % 2 != 0)
    rep.notes.push_back("odd L=" + std::to_string(*opt.fixed_L) + " rounded to " + std::to_string(*opt.fixed_L + 1));

  double max_r = 0.0;
  long blowups = 0;
  std::vector<double> rs;
  for (long t = 0; t < trials; ++t) {
    const PhaseState z{detail::random_position(target, rng), standard_normal(rng, target.dim())};
    IntegratorParams prm;
    prm.eps = opt.fixed_eps.value_or(detail::uniform(rng, opt.eps_min, opt.eps_max));
    prm.gamma = opt.fixed_gamma.value_or(detail::uniform(rng, opt.gamma_min, opt.gamma_max));
    if (opt.fixed_L) {
      prm.L = std::max(2L, *opt.fixed_L + (*opt.fixed_L % 2));
    } else {
      prm.L = 2 * detail::uniform_int(rng, 1, opt.L_max / 2);
    }
    try {
      const PhaseState once = momentum_flip(rahmc_flow(z, target, kin, prm));
      const PhaseState twice = momentum_flip(rahmc_flow(once, target, kin, prm));
      const double r = (twice.stacked() - z.stacked()).norm() / std::max(1.0, z.stacked().norm());
      rs.push_back(r);
      max_r = std::max(max_r, r);
    } catch (const BlowUpError&) {
      ++blowups;
    }
  }
  rep.measured["max_relative_error"] = max_r;
  rep.measured["trials"] = static_cast<double>(trials);
  rep.measured["blowups"] = static_cast<double>(blowups);
  rep.thresholds["max_relative_error"] = opt.threshold;
  rep.series["relative_error"] = rs;
  rep.pass = !rs.empty() && max_r <= opt.threshold;
  if (blowups > 0) rep.notes.push_back(std::to_string(blowups) + " blown-up trials excluded");
  rep.runtime_seconds = sw.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct VolumeOptions {
  double eps_min = 1e-3;
  double eps_max = 0.1;
  double gamma_min = 0.0;
  double gamma_max = 1.0;
  long L_max = 50;
  std::optional<long> fixed_L;
  std::optional<double> fixed_eps;
  std::optional<double> fixed_gamma;
  double h = 1e-5;
  double det_tol = 1e-4;
  /// Relative tolerance of each stage determinant against exp(+-d gamma eps L/2).
  double stage_tol = 1e-3;
};

/// Analytic determinant of one conformal stage of `steps` steps: each step
/// scales the momentum twice by exp(-gamma_signed eps / 2) in d coordinates
/// while the leapfrog part is volume preserving.
inline double conformal_stage_det(Eigen::Index d, double eps, double gamma_signed, long steps) {
  return std::exp(-static_cast<double>(d) * gamma_signed * eps * static_cast<double>(steps));
}

inline VerificationReport check_volume(const TargetDistribution& target, long trials, Rng& rng,
                                       const VolumeOptions& opt = {}) {
  require(trials >= 1, "check_volume: trials >= 1");
  require(target.dim() <= 5, "check_volume: numeric Jacobians are limited to d <= 5");
  detail::Stopwatch sw;
  VerificationReport rep;
  rep.name = "volume";
  const KineticSpec kin(target.dim());
  const auto d = target.dim();

  double max_det_err = 0.0, max_prod_err = 0.0, max_stage_err = 0.0;
  long blowups = 0, done = 0;
  std::vector<double> dets, repel_dets, attract_dets;
  for (long t = 0; t < trials; ++t) {
    const PhaseState z{detail::random_position(target, rng), standard_normal(rng, d)};
    IntegratorParams prm;
    prm.eps = opt.fixed_eps.value_or(detail::uniform(rng, opt.eps_min, opt.eps_max));
    prm.gamma = opt.fixed_gamma.value_or(detail::uniform(rng, opt.gamma_min, opt.gamma_max));
    prm.L = opt.fixed_L ? std::max(2L, *opt.fixed_L + (*opt.fixed_L % 2)) : 2 * detail::uniform_int(rng, 1, opt.L_max / 2);
    try {
      const PhaseMap full = [&](const PhaseState& s) { return rahmc_flow(s, target, kin, prm); };
      const PhaseMap repel = [&](const PhaseState& s) { return flow_repel(s, target, kin, prm); };
      const PhaseMap attract = [&](const PhaseState& s) { return flow_attract(s, target, kin, prm); };
      const double det_full = numeric_jacobian_det(full, z, opt.h);
      const double det_rep = numeric_jacobian_det(repel, z, opt.h);
      const double det_att = numeric_jacobian_det(attract, repel(z), opt.h);
      const long half = prm.L / 2;
      const double ref_rep = conformal_stage_det(d, prm.eps, -prm.gamma, half);
      const double ref_att = conformal_stage_det(d, prm.eps, prm.gamma, half);
      max_det_err = std::max(max_det_err, std::abs(det_full - 1.0));
      max_prod_err = std::max(max_prod_err, std::abs(det_rep * det_att - 1.0));
      max_stage_err = std::max({max_stage_err, std::abs(det_rep / ref_rep - 1.0), std::abs(det_att / ref_att - 1.0)});
      dets.push_back(det_full);
      repel_dets.push_back(det_rep);
      attract_dets.push_back(det_att);
      ++done;
    } catch (const BlowUpError&) {
      ++blowups;
    }
  }
  rep.measured["max_abs_det_error"] = max_det_err;
  rep.measured["max_abs_stage_product_error"] = max_prod_err;
  rep.measured["max_rel_stage_error"] = max_stage_err;
  rep.measured["trials"] = static_cast<double>(done);
  rep.measured["blowups"] = static_cast<double>(blowups);
  rep.thresholds["max_abs_det_error"] = opt.det_tol;
  rep.thresholds["max_abs_stage_product_error"] = opt.det_tol;
  rep.thresholds["max_rel_stage_error"] = opt.stage_tol;
  rep.series["det_full"] = dets;
  rep.series["det_repel"] = repel_dets;
  rep.series["det_attract"] = attract_dets;
  rep.pass = done > 0 && max_det_err <= opt.det_tol && max_prod_err <= opt.det_tol && max_stage_err <= opt.stage_tol;
  rep.runtime_seconds = sw.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct OrderOptions {
  double eps = 0.05;
  double gamma = 0.5;
  double lo = 1.7;
  double hi = 2.3;
};

/// Observed convergence order of the RAHMC flow at fixed time T, using a
/// reference solution at eps/16.
inline VerificationReport check_order(const TargetDistribution& target, const PhaseState& z, double T,
                                      const OrderOptions& opt = {}) {
  require(T > 0.0 && opt.eps > 0.0, "check_order: T and eps must be positive");
  detail::Stopwatch sw;
  VerificationReport rep;
  rep.name = "order";
  const KineticSpec kin(target.dim());
  // Snap eps so that T / eps is an even integer; the stage boundary then sits
  // at exactly T/2 for every refinement.
  const long L = round_even(T / opt.eps);
  const double eps = T / static_cast<double>(L);
  auto run = [&](long factor) {
    const IntegratorParams prm{eps / static_cast<double>(factor), L * factor, opt.gamma};
    return rahmc_flow(z, target, kin, prm).stacked();
  };
  rep.thresholds["order_lo"] = opt.lo;
  rep.thresholds["order_hi"] = opt.hi;
  rep.measured["eps"] = eps;
  rep.measured["gamma"] = opt.gamma;
  rep.measured["T"] = T;
  try {
    const Vector ref = run(16);
    const double e1 = (run(1) - ref).norm();
    const double e2 = (run(2) - ref).norm();
    const double order = std::log2(e1 / e2);
    rep.measured["error_eps"] = e1;
    rep.measured["error_eps_half"] = e2;
    rep.measured["observed_order"] = order;
    rep.pass = std::isfinite(order) && order >= opt.lo && order <= opt.hi;
  } catch (const BlowUpError& e) {
    rep.notes.push_back(std::string("blow-up: ") + e.what());
    rep.measured["blowup"] = 1.0;
    rep.pass = false;
  }
  rep.runtime_seconds = sw.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct EnergyRateOptions {
  double eps = 1e-4;
  double gamma_min = 0.1;
  double gamma_max = 1.0;
  /// Trials resample p until |p| >= min_momentum.
  double min_momentum = 0.5;
  double rel_tol = 0.05;
};

/// One-step energy change of the repelling / attracting conformal steps,
/// divided by eps, against +- gamma p' M^-1 p.
inline VerificationReport check_energy_rate(const TargetDistribution& target, long trials, Rng& rng,
                                            const EnergyRateOptions& opt = {}) {
  require(trials >= 1, "check_energy_rate: trials >= 1");
  detail::Stopwatch sw;
  VerificationReport rep;
  rep.name = "energy_rate";
  const KineticSpec kin(target.dim());
  double max_rel = 0.0;
  std::vector<double> rel;
  for (long t = 0; t < trials; ++t) {
    PhaseState z{detail::random_position(target, rng), standard_normal(rng, target.dim())};
    while (z.p.norm() < opt.min_momentum) z.p = standard_normal(rng, target.dim());
    const double gamma = detail::uniform(rng, opt.gamma_min, opt.gamma_max);
    const double h0 = hamiltonian(z, target, kin);
    const double expected = gamma * z.p.dot(kin.velocity(z.p));
    for (double sign : {+1.0, -1.0}) {
      // Repelling stage uses gamma_signed = -gamma and gains energy.
      const PhaseState z1 = conformal_leapfrog_step(z, target, kin, opt.eps, -sign * gamma);
      const double rate = (hamiltonian(z1, target, kin) - h0) / opt.eps;
      const double r = std::abs(rate - sign * expected) / std::abs(expected);
      rel.push_back(r);
      max_rel = std::max(max_rel, r);
    }
  }
  rep.measured["max_relative_error"] = max_rel;
  rep.measured["eps"] = opt.eps;
  rep.thresholds["max_relative_error"] = opt.rel_tol;
  rep.series["relative_error"] = rel;
  rep.pass = max_rel <= opt.rel_tol;
  rep.runtime_seconds = sw.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

enum class DriftFlow { RAHMC, RepelOnly, Leapfrog };

struct EnergyDriftOptions {
  double eps = 1e-3;
  long L_min = 1;
  long L_max = 200;
  double gamma_min = 0.0;
  double gamma_max = 1.0;
  /// Pins gamma (e.g. 0 for the conservative reduction).
  std::optional<double> fixed_gamma;
  DriftFlow flow = DriftFlow::RAHMC;
  double alpha = 0.01;
};

/// Energy drift H(z_T) - H(z_0) over N random trajectories with L ~ U{L_min..L_max}
/// and gamma ~ U(gamma_min, gamma_max), followed by a two-sided t-test of
/// zero mean. Passes when zero drift cannot be rejected at level alpha.
inline VerificationReport check_energy_drift(const TargetDistribution& target, long N, Rng& rng,
                                             const EnergyDriftOptions& opt = {}) {
  require(N >= 2, "check_energy_drift: N >= 2");
  detail::Stopwatch sw;
  VerificationReport rep;
  rep.name = opt.flow == DriftFlow::RAHMC ? "energy_drift" : (opt.flow == DriftFlow::RepelOnly ? "energy_drift_repel_only" : "energy_drift_leapfrog");
  const KineticSpec kin(target.dim());
  std::vector<double> drifts, Ls, gammas;
  long blowups = 0;
  for (long i = 0; i < N; ++i) {
    const PhaseState z{detail::random_position(target, rng), resample_momentum(rng, kin)};
    const long L = detail::uniform_int(rng, opt.L_min, opt.L_max);
    const double gamma = opt.fixed_gamma.value_or(detail::uniform(rng, opt.gamma_min, opt.gamma_max));
    try {
      PhaseState zt;
      switch (opt.flow) {
        case DriftFlow::RAHMC:
          zt = L >= 2 ? rahmc_flow(z, target, kin, {opt.eps, L, gamma}) : z;
          break;
        case DriftFlow::RepelOnly:
          zt = conformal_flow(z, target, kin, opt.eps, -gamma, L);
          break;
        case DriftFlow::Leapfrog:
          zt = leapfrog_flow(z, target, kin, opt.eps, L);
          break;
      }
      drifts.push_back(hamiltonian(zt, target, kin) - hamiltonian(z, target, kin));
      Ls.push_back(static_cast<double>(L));
      gammas.push_back(gamma);
    } catch (const BlowUpError&) {
      ++blowups;
    }
  }
  rep.series["delta_H"] = drifts;
  rep.series["L"] = Ls;
  rep.series["gamma"] = gammas;
  rep.measured["blowups"] = static_cast<double>(blowups);
  rep.thresholds["p_value_min"] = opt.alpha;
  if (drifts.size() < 2) {
    rep.pass = false;
    rep.notes.push_back("fewer than two finite trajectories");
  } else {
    const DriftStats st = energy_drift_stats(drifts);
    rep.measured["mean"] = st.mean;
    rep.measured["sd"] = st.sd;
    rep.measured["t_statistic"] = st.t_statistic;
    rep.measured["p_value"] = st.p_value;
    if (st.degenerate) rep.notes.push_back("zero-variance drifts");
    rep.pass = st.p_value > opt.alpha;
  }
  rep.runtime_seconds = sw.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

/// exp(-(d/2) (v - 1 - log v)), v = (b^2 - alpha^2) / (2 sigma^2).
inline double mode_transition_bound(double b, double d, double alpha, double sigma) {
  const double v = (b * b - alpha * alpha) / (2.0 * sigma * sigma);
  require(v > 0.0, "mode_transition_bound: requires b > alpha");
  return std::exp(-(d / 2.0) * (v - 1.0 - std::log(v)));
}

struct ModeTransitionOptions {
  double eps = 1e-3;
  /// Integration time; defaults to half an oscillation period pi * sigma.
  std::optional<double> T;
};

/// Empirical frequency with which an HMC trajectory started in the ball
/// |q - b 1| <= alpha sqrt(d) ends nearer -b 1 than b 1, against the
/// closed-form bound.
inline VerificationReport check_mode_transition_bound(double b, Eigen::Index d, double alpha, double sigma, long trials,
                                                      Rng& rng, const ModeTransitionOptions& opt = {}) {
  require(trials >= 1 && d >= 1, "check_mode_transition_bound: trials >= 1, d >= 1");
  require(b >= std::sqrt(alpha * alpha + 2.0 * sigma * sigma), "check_mode_transition_bound: need b >= sqrt(alpha^2 + 2 sigma^2)");
  detail::Stopwatch sw;
  VerificationReport rep;
  rep.name = "mode_transition_bound";
  const auto target = make_symmetric_bimodal(d, b, sigma);
  const KineticSpec kin(d);
  const Vector centre = Vector::Constant(d, b);
  const double radius = alpha * std::sqrt(static_cast<double>(d));
  const double T = opt.T.value_or(std::numbers::pi * sigma);
  const long L = std::max(1L, std::lround(T / opt.eps));

  long crossings = 0, blowups = 0;
  for (long t = 0; t < trials; ++t) {
    Vector dir = standard_normal(rng, d);
    dir /= dir.norm();
    const double r = radius * std::pow(uniform01(rng), 1.0 / static_cast<double>(d));
    const PhaseState z{centre + r * dir, standard_normal(rng, d)};
    try {
      const Vector q = leapfrog_flow(z, *target, kin, opt.eps, L).q;
      if ((q + centre).norm() <= (q - centre).norm()) ++crossings;
    } catch (const BlowUpError&) {
      ++blowups;
    }
  }
  const double n = static_cast<double>(trials - blowups);
  const double freq = n > 0 ? static_cast<double>(crossings) / n : 1.0;
  const double bound = mode_transition_bound(b, static_cast<double>(d), alpha, sigma);
  const double stderr_ = std::sqrt(bound * (1.0 - bound) / std::max(n, 1.0));
  rep.measured["frequency"] = freq;
  rep.measured["crossings"] = static_cast<double>(crossings);
  rep.measured["trials"] = n;
  rep.measured["bound"] = bound;
  rep.measured["T"] = T;
  rep.measured["eps"] = opt.eps;
  rep.thresholds["frequency_max"] = bound + 3.0 * stderr_;
  rep.notes.push_back("exact flow approximated by leapfrog with eps=" + std::to_string(opt.eps));
  rep.pass = n > 0 && freq <= bound + 3.0 * stderr_;
  rep.runtime_seconds = sw.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

/// Kernel signature accepted by the correctness check, so alternative or
/// deliberately broken kernels can be run through the same test.
using KernelFn = std::function<std::pair<Vector, TransitionRecord>(const Vector&, Rng&, const TargetDistribution&,
                                                                     const SamplerConfig&)>;

inline KernelFn default_kernel() {
  return [](const Vector& q, Rng& rng, const TargetDistribution& t, const SamplerConfig& c) {
    return transition(q, rng, t, c);
  };
}

struct CorrectnessOptions {
  long iterations = 20000;
  long warmup = 500;
  double eps = 0.25;
  long L = 6;
  double gamma = 0.5;
  double level = 0.01;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<Eigen::Index> dims{1, 2};
};

/// Chains on N(0, I) for HMC and RAHMC; per coordinate, a KS test against
/// N(0, 1) on the chain thinned by its integrated autocorrelation time.
/// A (dim, kind) cell passes when a majority of seeds pass every coordinate.
inline VerificationReport check_statistical_correctness(std::uint64_t seed, const CorrectnessOptions& opt = {},
                                                        const KernelFn& kernel = default_kernel()) {
  detail::Stopwatch sw;
  VerificationReport rep;
  rep.name = "statistical_correctness";
  rep.thresholds["ks_level"] = opt.level;
  bool all = true;
  for (Eigen::Index d : opt.dims) {
    const StdGaussianTarget target(d);
    for (SamplerKind kind : {SamplerKind::HMC, SamplerKind::RAHMC}) {
      SamplerConfig cfg{kind, {opt.eps, opt.L, kind == SamplerKind::HMC ? 0.0 : opt.gamma}, KineticSpec(d), false};
      int seed_passes = 0;
      for (std::uint64_t s : opt.seeds) {
        const std::uint64_t chain_seed = seed * 1000003ULL + s;
        rep.seeds.push_back(chain_seed);
        Rng rng = make_rng(chain_seed, static_cast<std::uint64_t>(d));
        Vector q = standard_normal(rng, d);
        for (long i = 0; i < opt.warmup; ++i) q = kernel(q, rng, target, cfg).first;
        std::vector<std::vector<double>> cols(static_cast<std::size_t>(d));
        for (long i = 0; i < opt.iterations; ++i) {
          q = kernel(q, rng, target, cfg).first;
          for (Eigen::Index j = 0; j < d; ++j) cols[static_cast<std::size_t>(j)].push_back(q[j]);
        }
        bool ok = true;
        for (Eigen::Index j = 0; j < d; ++j) {
          const auto& col = cols[static_cast<std::size_t>(j)];
          const EssResult e = ess(col);
          const auto stride = static_cast<std::size_t>(std::max(1.0, std::ceil(e.tau)));
          std::vector<double> thinned;
          for (std::size_t i = 0; i < col.size(); i += stride) thinned.push_back(col[i]);
          const KsResult ks = ks_test(thinned, std_normal_cdf);
          const std::string key =
              "p_d" + std::to_string(d) + "_" + std::string(to_string(kind)) + "_s" + std::to_string(s) + "_q" + std::to_string(j + 1);
          rep.measured[key] = ks.p_value;
          ok = ok && !e.degenerate && ks.p_value > opt.level;
        }
        seed_passes += ok ? 1 : 0;
      }
      const bool cell = 2 * seed_passes > static_cast<int>(opt.seeds.size());
      rep.measured["passes_d" + std::to_string(d) + "_" + std::string(to_string(kind))] = seed_passes;
      all = all && cell;
    }
  }
  rep.pass = all;
  rep.runtime_seconds = sw.seconds();
  return rep;
}

}  // namespace rahmc
