#pragma once

// Command-line harness: rahmc sample | tune | compare | verify.
//
// Exit codes: 0 success, 1 a verification check failed, 2 config or usage
// error, 3 runtime or tuner failure.

#include "rahmc/io.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

namespace rahmc::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3 };

/// Runs fn(0..n-1) on up to `threads` workers. Tasks own their outputs, so the
/// result does not depend on scheduling. The first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (first) std::rethrow_exception(first);
}

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  unsigned threads = 1;
  std::vector<std::string> checks;
};

namespace detail {

inline SamplerConfig to_sampler_config(const SamplerSpec& s, Eigen::Index d) {
  return SamplerConfig{s.kind, {s.eps, s.L, s.kind == SamplerKind::HMC ? 0.0 : s.gamma}, KineticSpec(d), s.reflect};
}

struct ChainRun {
  Chain chain;
  double wall_seconds = 0.0;
};

inline std::vector<ChainRun> run_chains(const TargetDistribution& target, const SamplerSpec& s, const RunSpec& run,
                                        unsigned threads) {
  std::vector<ChainRun> out(static_cast<std::size_t>(run.chains));
  parallel_for(out.size(), threads, [&](std::size_t k) {
    ::rahmc::detail::Stopwatch sw;
    RunOptions opt{run.n, run.warmup, run.seed, k, std::nullopt};
    if (s.tune) opt.tuner = s.tuner;
    const Vector q0 = default_initial_state(target.dim(), run.seed, k);
    out[k].chain = run_chain(q0, target, to_sampler_config(s, target.dim()), opt);
    out[k].wall_seconds = sw.seconds();
  });
  return out;
}

inline std::filesystem::path prepare_out(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.output.directory);
  std::filesystem::create_directories(dir);
  return dir;
}

inline json config_echo(const ExperimentConfig& cfg) {
  json samplers = json::array();
  for (const auto& s : cfg.samplers) {
    samplers.push_back({{"kind", std::string(to_string(s.kind))},
                        {"epsilon", s.eps},
                        {"gamma", s.gamma},
                        {"L", s.L},
                        {"tune", s.tune},
                        {"T", s.tuner.T},
                        {"delta", s.tuner.delta},
                        {"gamma0", s.tuner.gamma0},
                        {"reflect", s.reflect}});
  }
  return {{"target", {{"name", cfg.target.name}, {"params", cfg.target.params}}},
          {"samplers", samplers},
          {"run", {{"n", cfg.run.n}, {"warmup", cfg.run.warmup}, {"chains", cfg.run.chains}, {"seed", cfg.run.seed}}}};
}

}  // namespace detail

inline int cmd_sample(const ExperimentConfig& cfg, unsigned threads, std::ostream& out) {
  if (cfg.samplers.size() != 1) throw ConfigError("sampler", "sample takes exactly one sampler");
  const TargetPtr target = make_target(cfg.target);
  const auto dir = detail::prepare_out(cfg);
  ::rahmc::detail::Stopwatch sw;
  const auto runs = detail::run_chains(*target, cfg.samplers.front(), cfg.run, threads);
  json chains = json::array();
  for (std::size_t k = 0; k < runs.size(); ++k) {
    if (cfg.output.wants("csv")) write_chain_csv(dir / ("chain_" + std::to_string(k) + ".csv"), runs[k].chain);
    chains.push_back(chain_metadata(runs[k].chain, runs[k].wall_seconds));
  }
  const Chain& c0 = runs.front().chain;
  double acc = 0.0;
  for (const auto& r : runs) acc += r.chain.acceptance_rate;
  json meta{{"seed", cfg.run.seed},
            {"target", target->name()},
            {"sampler", std::string(to_string(c0.config.kind))},
            {"epsilon", c0.config.params.eps},
            {"gamma", c0.config.effective_gamma()},
            {"L", c0.config.params.L},
            {"acceptance_rate", acc / static_cast<double>(runs.size())},
            {"n", cfg.run.n},
            {"warmup", cfg.run.warmup},
            {"wall_seconds", sw.seconds()},
            {"chains", chains},
            {"config", detail::config_echo(cfg)}};
  if (cfg.output.wants("json")) write_json(dir / "run.json", meta);
  out << "sampled " << runs.size() << " chain(s) of " << cfg.run.n << " into " << dir.string() << '\n';
  return kOk;
}

inline int cmd_tune(const ExperimentConfig& cfg, std::ostream& out) {
  if (cfg.samplers.size() != 1) throw ConfigError("sampler", "tune takes exactly one sampler");
  if (cfg.run.warmup < 1) throw ConfigError("run.warmup", "tuning needs warmup >= 1");
  const TargetPtr target = make_target(cfg.target);
  const SamplerSpec& s = cfg.samplers.front();
  const auto dir = detail::prepare_out(cfg);
  Rng rng = make_rng(cfg.run.seed, 0);
  const Vector q0 = default_initial_state(target->dim(), cfg.run.seed, 0);
  const TuneResult t = tune(s.kind, *target, KineticSpec(target->dim()), q0, cfg.run.warmup, s.tuner, rng, s.reflect);
  json j = to_json(t);
  j["seed"] = cfg.run.seed;
  j["target"] = target->name();
  j["sampler"] = std::string(to_string(s.kind));
  write_json(dir / "tune.json", j);
  out << j.dump(2) << '\n';
  return kOk;
}

inline int cmd_compare(const ExperimentConfig& cfg, unsigned threads, std::ostream& out) {
  if (cfg.samplers.empty()) throw ConfigError("samplers", "sampler list is empty");
  const TargetPtr target = make_target(cfg.target);
  const auto dir = detail::prepare_out(cfg);
  const auto modes = target_modes(*target);

  std::optional<Matrix> reference;
  if (target->has_exact_sampler()) {
    Rng ref_rng = make_rng(cfg.run.seed, 0xFEEDULL);
    reference = target->exact_sample(ref_rng, cfg.metrics.reference_n);
  }
  SinkhornParams sp;
  sp.lambda = cfg.metrics.sinkhorn_lambda;
  sp.relative = cfg.metrics.sinkhorn_relative;
  if (cfg.metrics.sinkhorn_subsample > 0) {
    sp.subsample = cfg.metrics.sinkhorn_subsample;
  } else {
    sp.subsample.reset();
  }
  sp.subsample_seed = cfg.run.seed;

  json rows = json::array();
  std::ofstream acf_csv;
  if (cfg.output.wants("csv")) {
    acf_csv.open(dir / "acf.csv");
    acf_csv << "sampler,lag,rho\n";
  }
  for (std::size_t si = 0; si < cfg.samplers.size(); ++si) {
    const SamplerSpec& s = cfg.samplers[si];
    const std::string label = std::to_string(si) + "_" + std::string(to_string(s.kind));
    const auto runs = detail::run_chains(*target, s, cfg.run, threads);

    Matrix pooled(cfg.run.n * cfg.run.chains, target->dim());
    double acc = 0.0, wall = 0.0;
    json chains = json::array();
    for (std::size_t k = 0; k < runs.size(); ++k) {
      pooled.middleRows(static_cast<Eigen::Index>(k) * cfg.run.n, cfg.run.n) = runs[k].chain.samples;
      acc += runs[k].chain.acceptance_rate;
      wall += runs[k].wall_seconds;
      chains.push_back(chain_metadata(runs[k].chain, runs[k].wall_seconds));
      if (cfg.output.wants("csv"))
        write_chain_csv(dir / (label + "_chain_" + std::to_string(k) + ".csv"), runs[k].chain);
    }
    json row{{"sampler", std::string(to_string(s.kind))},
             {"label", label},
             {"acceptance_rate", acc / static_cast<double>(runs.size())},
             {"wall_seconds", wall},
             {"chains", chains}};
    if (reference) {
      const SinkhornResult w = sinkhorn_distance(EmpiricalMeasure(pooled), EmpiricalMeasure(*reference), sp);
      row["sinkhorn"] = {{"W2", w.distance},
                         {"lambda", w.lambda},
                         {"converged", w.converged},
                         {"marginal_error", w.marginal_error}};
    } else {
      row["sinkhorn"] = "unavailable";
    }
    // ACF / ESS of the first chain, averaged over coordinates.
    const Matrix& x = runs.front().chain.samples;
    const auto lag = static_cast<std::size_t>(std::min<long>(cfg.metrics.max_lag, std::max<long>(1, cfg.run.n - 1)));
    if (static_cast<std::size_t>(x.rows()) > lag) {
      std::vector<double> rho(lag + 1, 0.0);
      double ess_min = INFINITY;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const std::vector<double> col(x.col(j).data(), x.col(j).data() + x.rows());
        const AcfResult a = acf(col, lag);
        for (std::size_t k = 0; k <= lag; ++k) rho[k] += a.rho[k] / static_cast<double>(x.cols());
        ess_min = std::min(ess_min, ess(col).ess);
      }
      double abs_sum = 0.0;
      for (std::size_t k = 1; k <= lag; ++k) abs_sum += std::abs(rho[k]);
      row["acf"] = rho;
      row["acf_abs_sum"] = abs_sum;
      row["ess_min"] = ess_min;
      if (acf_csv.is_open())
        for (std::size_t k = 0; k <= lag; ++k) acf_csv << label << ',' << k << ',' << fmt17(rho[k]) << '\n';
    }
    if (!modes.empty()) row["mode_occupancy"] = mode_occupancy(pooled, modes);
    rows.push_back(row);
    out << label << ": acceptance " << row["acceptance_rate"].get<double>();
    if (reference) out << ", W2 " << row["sinkhorn"]["W2"].get<double>();
    out << '\n';
  }
  json result{{"seed", cfg.run.seed},
              {"target", target->name()},
              {"n", cfg.run.n},
              {"warmup", cfg.run.warmup},
              {"reference_n", reference ? cfg.metrics.reference_n : 0},
              {"samplers", rows},
              {"config", detail::config_echo(cfg)}};
  write_json(dir / "compare.json", result);
  return kOk;
}

// ---------------------------------------------------------------------------

using CheckFn = std::function<VerificationReport(std::uint64_t seed)>;

/// Registered verification checks, run with their default settings.
inline const std::vector<std::pair<std::string, CheckFn>>& check_registry() {
  static const std::vector<std::pair<std::string, CheckFn>> reg{
      {"involution",
       [](std::uint64_t s) {
         Rng rng = make_rng(s, 1);
         return check_involution(*make_anisotropic_mixture(2), 100, rng);
       }},
      {"volume",
       [](std::uint64_t s) {
         Rng rng = make_rng(s, 2);
         return check_volume(*make_anisotropic_mixture(2), 50, rng);
       }},
      {"order",
       [](std::uint64_t s) {
         Rng rng = make_rng(s, 3);
         const auto t = make_anisotropic_mixture(2);
         const PhaseState z{::rahmc::detail::random_position(*t, rng), standard_normal(rng, 2)};
         return check_order(*t, z, 1.0);
       }},
      {"energy_rate",
       [](std::uint64_t s) {
         Rng rng = make_rng(s, 4);
         return check_energy_rate(*make_anisotropic_mixture(2), 50, rng);
       }},
      {"energy_drift",
       [](std::uint64_t s) {
         Rng rng = make_rng(s, 5);
         return check_energy_drift(*make_bivariate_example(), 100, rng);
       }},
      {"mode_transition",
       [](std::uint64_t s) {
         Rng rng = make_rng(s, 6);
         return check_mode_transition_bound(3.0, 2, 1.0, 1.0, 2000, rng);
       }},
      {"statistical", [](std::uint64_t s) { return check_statistical_correctness(s); }},
  };
  return reg;
}

inline int cmd_verify(const std::vector<std::string>& names, std::uint64_t seed, const std::filesystem::path& dir,
                      unsigned threads, std::ostream& out, std::ostream& err) {
  const auto& reg = check_registry();
  std::vector<std::size_t> picked;
  for (const auto& n : names) {
    auto it = std::find_if(reg.begin(), reg.end(), [&](const auto& e) { return e.first == n; });
    if (it == reg.end()) {
      err << "unknown check '" << n << "'; valid checks:";
      for (const auto& e : reg) err << ' ' << e.first;
      err << '\n';
      return kUsage;
    }
    picked.push_back(static_cast<std::size_t>(it - reg.begin()));
  }
  if (picked.empty())
    for (std::size_t i = 0; i < reg.size(); ++i) picked.push_back(i);

  std::vector<VerificationReport> reports(picked.size());
  parallel_for(picked.size(), threads, [&](std::size_t i) { reports[i] = reg[picked[i]].second(seed); });

  json all = json::array();
  bool ok = true;
  for (const auto& r : reports) {
    out << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.runtime_seconds << " s)\n";
    all.push_back(to_json(r));
    ok = ok && r.pass;
  }
  std::filesystem::create_directories(dir);
  write_json(dir / "verify.json", {{"seed", seed}, {"pass", ok}, {"reports", all}});
  return ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"RAHMC sampler toolkit"};
  app.require_subcommand(1, 1);
  GlobalOptions g;
  std::optional<unsigned> threads;
  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", g.config, "JSON experiment config");
    if (need_config) c->required();
    sub->add_option("--seed", g.seed, "master seed (overrides run.seed)");
    sub->add_option("--out", g.out, "output directory (overrides output.directory)");
    sub->add_option("--threads", threads, "worker threads (default: $RAHMC_THREADS, else 1)")->check(CLI::PositiveNumber);
  };
  auto* sample = app.add_subcommand("sample", "run chains and write per-chain CSV and run.json");
  auto* tune_cmd = app.add_subcommand("tune", "dual-averaging warm-up; writes tune.json");
  auto* compare = app.add_subcommand("compare", "run several samplers and write compare.json");
  auto* verify = app.add_subcommand("verify", "run property checks; writes verify.json");
  add_common(sample, true);
  add_common(tune_cmd, true);
  add_common(compare, true);
  add_common(verify, false);
  verify->add_option("checks", g.checks, "check names (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  if (!threads) {
    // Parsed by hand so a malformed value is a usage error, not silently ignored.
    if (const char* env = std::getenv("RAHMC_THREADS"); env && *env) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (*end != '\0' || v < 1 || v > 4096) {
        err << "usage error: RAHMC_THREADS must be a positive integer, got '" << env << "'\n";
        return kUsage;
      }
      threads = static_cast<unsigned>(v);
    }
  }
  g.threads = threads.value_or(1);

  try {
    ExperimentConfig cfg;
    if (!g.config.empty()) cfg = load_config(g.config);
    if (g.seed) cfg.run.seed = *g.seed;
    if (g.out) cfg.output.directory = *g.out;
    if (sample->parsed()) return cmd_sample(cfg, g.threads, out);
    if (tune_cmd->parsed()) return cmd_tune(cfg, out);
    if (compare->parsed()) return cmd_compare(cfg, g.threads, out);
    std::vector<std::string> names = g.checks.empty() ? cfg.checks : g.checks;
    return cmd_verify(names, cfg.run.seed, cfg.output.directory, g.threads, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractViolation& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const TunerError& e) {
    err << "tuner failure: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace rahmc::cli
