#pragma once

// Experiment configuration (JSON), target construction by name, and the CSV /
// JSON writers used by the command-line harness.

#include "rahmc/diagnostics.hpp"
#include "rahmc/samplers.hpp"
#include "rahmc/verify.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace rahmc {

using json = nlohmann::json;

/// Invalid or missing configuration field; `field()` names it.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& msg)
      : std::runtime_error("config field '" + field + "': " + msg), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct TargetSpec {
  std::string name = "std_gaussian";
  json params = json::object();
};

struct SamplerSpec {
  SamplerKind kind = SamplerKind::RAHMC;
  double eps = 0.1;
  double gamma = 0.5;
  long L = 20;
  /// Dual averaging during warm-up when set; eps/gamma/L are then outputs.
  bool tune = false;
  TunerSettings tuner;
  bool reflect = false;
};

struct RunSpec {
  long n = 1000;
  long warmup = 1000;
  long chains = 1;
  std::uint64_t seed = 0;
};

struct MetricsSpec {
  double sinkhorn_lambda = 0.05;
  bool sinkhorn_relative = true;
  /// 0 disables subsampling.
  long sinkhorn_subsample = 2000;
  long max_lag = 50;
  long reference_n = 5000;
};

struct OutputSpec {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "json"};

  bool wants(const std::string& f) const { return std::find(formats.begin(), formats.end(), f) != formats.end(); }
};

struct ExperimentConfig {
  TargetSpec target;
  /// `sampler` for sample/tune, `samplers` for compare (a single `sampler`
  /// is promoted to a one-element list).
  std::vector<SamplerSpec> samplers{SamplerSpec{}};
  RunSpec run;
  MetricsSpec metrics;
  OutputSpec output;
  std::vector<std::string> checks;
};

namespace detail {

template <class T>
T get_field(const json& obj, const std::string& key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + key, "wrong type");
  }
}

inline SamplerSpec parse_sampler(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  SamplerSpec s;
  const auto kind = get_field<std::string>(j, "kind", path, "RAHMC");
  const auto k = parse_sampler_kind(kind);
  if (!k) throw ConfigError(path + "kind", "unknown sampler kind '" + kind + "' (HMC or RAHMC)");
  s.kind = *k;
  s.eps = get_field(j, "epsilon", path, s.eps);
  s.gamma = get_field(j, "gamma", path, s.gamma);
  s.L = get_field(j, "L", path, s.L);
  s.tune = get_field(j, "tune", path, s.tune);
  s.reflect = get_field(j, "reflect", path, s.reflect);
  s.tuner.T = get_field(j, "T", path, s.tuner.T);
  s.tuner.delta = get_field(j, "delta", path, s.tuner.delta);
  s.tuner.gamma0 = get_field(j, "gamma0", path, s.tuner.gamma0);
  s.tuner.max_L = get_field(j, "max_L", path, s.tuner.max_L);
  if (!(s.tuner.delta > 0.0 && s.tuner.delta < 1.0)) throw ConfigError(path + "delta", "must lie in (0, 1)");
  if (!(s.tuner.T > 0.0) || !std::isfinite(s.tuner.T)) throw ConfigError(path + "T", "must be positive");
  if (!(s.tuner.gamma0 > 0.0)) throw ConfigError(path + "gamma0", "must be positive");
  if (s.tuner.max_L < 2) throw ConfigError(path + "max_L", "must be >= 2");
  if (!s.tune) {
    if (!(s.eps > 0.0) || !std::isfinite(s.eps)) throw ConfigError(path + "epsilon", "must be positive");
    if (!(s.gamma >= 0.0) || !std::isfinite(s.gamma)) throw ConfigError(path + "gamma", "must be >= 0");
    if (s.L < 2 || s.L % 2 != 0) throw ConfigError(path + "L", "must be an even integer >= 2");
  }
  return s;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  ExperimentConfig c;
  if (j.contains("target")) {
    const json& t = j.at("target");
    if (t.is_string()) {
      c.target.name = t.get<std::string>();
    } else if (t.is_object()) {
      c.target.name = detail::get_field<std::string>(t, "name", "target.", c.target.name);
      if (t.contains("params")) {
        if (!t.at("params").is_object()) throw ConfigError("target.params", "expected an object");
        c.target.params = t.at("params");
      }
    } else {
      throw ConfigError("target", "expected a name or an object");
    }
  }
  if (j.contains("samplers")) {
    if (!j.at("samplers").is_array()) throw ConfigError("samplers", "expected an array");
    c.samplers.clear();
    std::size_t i = 0;
    for (const auto& s : j.at("samplers")) c.samplers.push_back(detail::parse_sampler(s, "samplers[" + std::to_string(i++) + "]."));
  } else if (j.contains("sampler")) {
    c.samplers = {detail::parse_sampler(j.at("sampler"), "sampler.")};
  }
  if (j.contains("run")) {
    const json& r = j.at("run");
    if (!r.is_object()) throw ConfigError("run", "expected an object");
    c.run.n = detail::get_field(r, "n", "run.", c.run.n);
    c.run.warmup = detail::get_field(r, "warmup", "run.", c.run.warmup);
    c.run.chains = detail::get_field(r, "chains", "run.", c.run.chains);
    c.run.seed = detail::get_field(r, "seed", "run.", c.run.seed);
  }
  if (c.run.n < 1) throw ConfigError("run.n", "must be >= 1");
  if (c.run.warmup < 0) throw ConfigError("run.warmup", "must be >= 0");
  if (c.run.chains < 1) throw ConfigError("run.chains", "must be >= 1");
  for (std::size_t i = 0; i < c.samplers.size(); ++i)
    if (c.samplers[i].tune && c.run.warmup < 1) throw ConfigError("run.warmup", "tuning needs warmup >= 1");
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    if (!m.is_object()) throw ConfigError("metrics", "expected an object");
    c.metrics.sinkhorn_lambda = detail::get_field(m, "sinkhorn_lambda", "metrics.", c.metrics.sinkhorn_lambda);
    const auto mode = detail::get_field<std::string>(m, "sinkhorn_lambda_mode", "metrics.", "relative");
    if (mode != "relative" && mode != "absolute")
      throw ConfigError("metrics.sinkhorn_lambda_mode", "must be 'relative' or 'absolute'");
    c.metrics.sinkhorn_relative = mode == "relative";
    c.metrics.sinkhorn_subsample = detail::get_field(m, "sinkhorn_subsample", "metrics.", c.metrics.sinkhorn_subsample);
    c.metrics.max_lag = detail::get_field(m, "max_lag", "metrics.", c.metrics.max_lag);
    c.metrics.reference_n = detail::get_field(m, "reference_n", "metrics.", c.metrics.reference_n);
    if (!(c.metrics.sinkhorn_lambda > 0.0)) throw ConfigError("metrics.sinkhorn_lambda", "must be positive");
    if (c.metrics.sinkhorn_subsample < 0) throw ConfigError("metrics.sinkhorn_subsample", "must be >= 0");
    if (c.metrics.max_lag < 1) throw ConfigError("metrics.max_lag", "must be >= 1");
    if (c.metrics.reference_n < 1) throw ConfigError("metrics.reference_n", "must be >= 1");
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    if (!o.is_object()) throw ConfigError("output", "expected an object");
    c.output.directory = detail::get_field(o, "directory", "output.", c.output.directory);
    c.output.formats = detail::get_field(o, "formats", "output.", c.output.formats);
    for (const auto& f : c.output.formats)
      if (f != "csv" && f != "json") throw ConfigError("output.formats", "unknown format '" + f + "'");
  }
  if (j.contains("checks")) c.checks = detail::get_field(j, "checks", "", c.checks);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& target_names() {
  static const std::vector<std::string> names{"std_gaussian", "bimodal",       "anisotropic",   "bivariate_example",
                                              "symmetric_bimodal", "funnel",   "concentric_l1", "nested_l1",
                                              "benchmark20"};
  return names;
}

/// Builds a target from its registry name and parameter object.
inline TargetPtr make_target(const TargetSpec& spec) {
  const json& p = spec.params;
  auto num = [&](const char* key, double fallback) { return detail::get_field(p, key, "target.params.", fallback); };
  auto dim = [&](long fallback) {
    const long d = detail::get_field(p, "d", "target.params.", fallback);
    if (d < 1) throw ConfigError("target.params.d", "must be >= 1");
    return static_cast<Eigen::Index>(d);
  };
  const std::string& n = spec.name;
  try {
    if (n == "std_gaussian") return std::make_shared<StdGaussianTarget>(dim(2));
    if (n == "bimodal") return make_scaled_bimodal(dim(3));
    if (n == "anisotropic") return make_anisotropic_mixture(dim(2), num("b", 2.0));
    if (n == "bivariate_example") return make_bivariate_example();
    if (n == "symmetric_bimodal") return make_symmetric_bimodal(dim(2), num("b", 3.0), num("sigma", 1.0));
    if (n == "funnel") return std::make_shared<FunnelTarget>(num("mu", 3.0), num("sigma", 1.0), num("c", 1.0));
    if (n == "concentric_l1") return make_concentric_l1(dim(2), num("sigma", 0.5));
    if (n == "nested_l1") return make_nested_l1(dim(2), num("sigma", 0.5));
    if (n == "benchmark20") {
      const auto path = detail::get_field<std::string>(p, "means_file", "target.params.", "data/benchmark20_means.txt");
      return load_benchmark_means(path);
    }
  } catch (const ContractViolation& e) {
    throw ConfigError("target.params", e.what());
  } catch (const ParseError& e) {
    throw ConfigError("target.params.means_file", e.what());
  }
  std::string valid;
  for (const auto& s : target_names()) valid += (valid.empty() ? "" : ", ") + s;
  throw ConfigError("target.name", "unknown target '" + n + "' (valid: " + valid + ")");
}

/// Reference points for mode occupancy: component means of a mixture, the
/// two tips of the funnel; empty for targets without point modes.
inline std::vector<Vector> target_modes(const TargetDistribution& t) {
  if (const auto* m = dynamic_cast<const GaussianMixtureTarget*>(&t)) return m->means();
  if (const auto* f = dynamic_cast<const FunnelTarget*>(&t)) return f->tips();
  return {};
}

// ---------------------------------------------------------------------------

/// %.17g, enough digits to round-trip a double.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_chain_csv(std::ostream& os, const Chain& ch) {
  os << "iter";
  for (Eigen::Index j = 0; j < ch.dim(); ++j) os << ",q" << (j + 1);
  os << ",accepted,H_current,H_proposed\n";
  for (Eigen::Index i = 0; i < ch.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    os << i;
    for (Eigen::Index j = 0; j < ch.dim(); ++j) os << ',' << fmt17(ch.samples(i, j));
    os << ',' << (ch.accepted[k] ? 1 : 0) << ',' << fmt17(ch.H_current[k]) << ',' << fmt17(ch.H_proposed[k]) << '\n';
  }
}

inline void write_chain_csv(const std::filesystem::path& path, const Chain& ch) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_chain_csv(os, ch);
}

/// Doubles that are not finite become null (JSON has no inf/nan).
inline json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const TuneResult& t) {
  return {{"epsilon", t.eps},
          {"gamma", t.gamma},
          {"L", t.L},
          {"delta", t.delta},
          {"T", t.T},
          {"acceptance_during_warmup", t.acceptance_during_warmup},
          {"epsilon0", t.eps0},
          {"warmup_blowups", t.blowups}};
}

inline json chain_metadata(const Chain& ch, double wall_seconds) {
  json j{{"seed", ch.seed},
         {"chain_index", ch.chain_index},
         {"target", ch.target_name},
         {"sampler", std::string(to_string(ch.config.kind))},
         {"epsilon", ch.config.params.eps},
         {"gamma", ch.config.effective_gamma()},
         {"L", ch.config.params.L},
         {"reflect", ch.config.reflect_midpoint},
         {"acceptance_rate", ch.acceptance_rate},
         {"n", ch.size()},
         {"warmup", ch.warmup},
         {"blowups", ch.blowups},
         {"wall_seconds", wall_seconds},
         {"seconds_per_gradient",
          wall_seconds / std::max(1.0, static_cast<double>((ch.size() + ch.warmup) * (ch.config.params.L + 1)))}};
  if (ch.tuning) j["tuning"] = to_json(*ch.tuning);
  return j;
}

inline json to_json(const VerificationReport& r) {
  json measured = json::object(), thresholds = json::object(), series = json::object();
  for (const auto& [k, v] : r.measured) measured[k] = num_or_null(v);
  for (const auto& [k, v] : r.thresholds) thresholds[k] = num_or_null(v);
  for (const auto& [k, v] : r.series) {
    json a = json::array();
    for (double x : v) a.push_back(num_or_null(x));
    series[k] = a;
  }
  return {{"name", r.name},      {"pass", r.pass},   {"measured", measured},
          {"thresholds", thresholds}, {"series", series}, {"seeds", r.seeds},
          {"notes", r.notes},    {"runtime_seconds", r.runtime_seconds}};
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace rahmc
