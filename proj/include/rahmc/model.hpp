#pragma once

// Target distributions: unnormalized log-density, gradient, and (where the
// target allows it) direct i.i.d. sampling for ground-truth comparisons.
//
// Every log-density here has its additive constant fixed to 0, so the
// potential energy used by the dynamics is simply U(q) = -log_density(q).

#include "rahmc/core.hpp"
#include "rahmc/rng.hpp"

#include <algorithm>
#include <concepts>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace rahmc {

/// Anything the integrators can run on.
template <class T>
concept LogDensityModel = requires(const T& t, const Vector& q) {
  { t.dim() } -> std::convertible_to<Eigen::Index>;
  { t.log_density(q) } -> std::convertible_to<double>;
  { t.grad_log_density(q) } -> std::convertible_to<Vector>;
};

/// Runtime-polymorphic target. Public entry points validate the dimension and
/// forward to the `*_impl` hooks.
class TargetDistribution {
 public:
  virtual ~TargetDistribution() = default;

  Eigen::Index dim() const noexcept { return dim_; }
  virtual std::string name() const = 0;

  double log_density(const Vector& q) const {
    require_dim(q.size(), dim_, "log_density");
    return log_density_impl(q);
  }

  Vector grad_log_density(const Vector& q) const {
    require_dim(q.size(), dim_, "grad_log_density");
    return grad_impl(q);
  }

  virtual bool has_exact_sampler() const { return false; }

  /// n x d matrix of i.i.d. draws, one per row.
  Matrix exact_sample(Rng& rng, Eigen::Index n) const {
    require(n >= 1, "exact_sample: n must be >= 1");
    if (!has_exact_sampler()) throw UnsupportedOperation("exact_sample: target '" + name() + "' has no direct sampler");
    return exact_sample_impl(rng, n);
  }

 protected:
  explicit TargetDistribution(Eigen::Index dim) : dim_(dim) { require(dim >= 1, "target dimension must be >= 1"); }

  virtual double log_density_impl(const Vector& q) const = 0;
  virtual Vector grad_impl(const Vector& q) const = 0;
  virtual Matrix exact_sample_impl(Rng&, Eigen::Index) const { throw UnsupportedOperation(name()); }

 private:
  Eigen::Index dim_;
};

using TargetPtr = std::shared_ptr<const TargetDistribution>;

// ---------------------------------------------------------------------------

/// Isotropic standard normal, log pi(q) = -|q|^2 / 2.
class StdGaussianTarget final : public TargetDistribution {
 public:
  explicit StdGaussianTarget(Eigen::Index d) : TargetDistribution(d) {}

  std::string name() const override { return "std_gaussian"; }
  bool has_exact_sampler() const override { return true; }

 protected:
  double log_density_impl(const Vector& q) const override { return -0.5 * q.squaredNorm(); }
  Vector grad_impl(const Vector& q) const override { return -q; }
  Matrix exact_sample_impl(Rng& rng, Eigen::Index n) const override {
    Matrix out(n, dim());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = standard_normal(rng, dim()).transpose();
    return out;
  }
};

// ---------------------------------------------------------------------------

struct GaussianComponent {
  double weight;
  Vector mean;
  Matrix cov;
};

/// Finite mixture of full-covariance Gaussians. Densities are combined with
/// log-sum-exp; the per-component normalisers (det Sigma_k)^(-1/2) are kept
/// since they differ between components, the common (2 pi)^(-d/2) is not.
class GaussianMixtureTarget final : public TargetDistribution {
 public:
  explicit GaussianMixtureTarget(std::vector<GaussianComponent> comps, std::string label = "gaussian_mixture")
      : TargetDistribution(comps.empty() ? 0 : comps.front().mean.size()), label_(std::move(label)) {
    require(!comps.empty(), "mixture needs at least one component");
    double wsum = 0.0;
    for (const auto& c : comps) {
      require(c.weight >= 0.0 && std::isfinite(c.weight), "mixture weights must be finite and nonnegative");
      wsum += c.weight;
    }
    require(std::abs(wsum - 1.0) <= 1e-9, "mixture weights must sum to 1");
    for (auto& c : comps) {
      require_dim(c.mean.size(), dim(), "mixture mean");
      require(c.cov.rows() == dim() && c.cov.cols() == dim(), "mixture covariance must be d x d");
      require((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + c.cov.cwiseAbs().maxCoeff()),
              "mixture covariance must be symmetric");
      Eigen::LLT<Matrix> llt(c.cov);
      require(llt.info() == Eigen::Success, "mixture covariance must be positive definite");
      Component k;
      k.log_weight = c.weight > 0.0 ? std::log(c.weight) : -INFINITY;
      k.weight = c.weight;
      k.mean = c.mean;
      k.cov = c.cov;
      k.chol = llt.matrixL();
      k.precision = llt.solve(Matrix::Identity(dim(), dim()));
      k.half_log_det = k.chol.diagonal().array().log().sum();
      comps_.push_back(std::move(k));
    }
  }

  std::string name() const override { return label_; }
  bool has_exact_sampler() const override { return true; }

  std::size_t num_components() const noexcept { return comps_.size(); }
  double weight(std::size_t k) const { return comps_.at(k).weight; }
  const Vector& mean(std::size_t k) const { return comps_.at(k).mean; }
  const Matrix& covariance(std::size_t k) const { return comps_.at(k).cov; }

  std::vector<Vector> means() const {
    std::vector<Vector> out;
    for (const auto& c : comps_) out.push_back(c.mean);
    return out;
  }

 protected:
  double log_density_impl(const Vector& q) const override {
    double acc = -INFINITY;
    for (const auto& c : comps_) acc = log_add_exp(acc, component_log(c, q));
    return acc;
  }

  Vector grad_impl(const Vector& q) const override {
    std::vector<double> logs(comps_.size());
    double total = -INFINITY;
    for (std::size_t k = 0; k < comps_.size(); ++k) {
      logs[k] = component_log(comps_[k], q);
      total = log_add_exp(total, logs[k]);
    }
    Vector g = Vector::Zero(dim());
    for (std::size_t k = 0; k < comps_.size(); ++k) {
      if (logs[k] == -INFINITY) continue;
      const double r = std::exp(logs[k] - total);
      g.noalias() -= r * (comps_[k].precision * (q - comps_[k].mean));
    }
    return g;
  }

  Matrix exact_sample_impl(Rng& rng, Eigen::Index n) const override {
    std::vector<double> w;
    for (const auto& c : comps_) w.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    Matrix out(n, dim());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& c = comps_[pick(rng)];
      out.row(i) = (c.mean + c.chol * standard_normal(rng, dim())).transpose();
    }
    return out;
  }

 private:
  struct Component {
    double weight;
    double log_weight;
    Vector mean;
    Matrix cov;
    Matrix chol;
    Matrix precision;
    double half_log_det;
  };

  static double component_log(const Component& c, const Vector& q) {
    if (c.log_weight == -INFINITY) return -INFINITY;
    const Vector r = q - c.mean;
    return c.log_weight - c.half_log_det - 0.5 * r.dot(c.precision * r);
  }

  std::string label_;
  std::vector<Component> comps_;
};

// ---------------------------------------------------------------------------

/// Two-dimensional bimodal funnel:
///   q2 ~ 0.5 N(mu - 5, sigma) + 0.5 N(mu + 5, sigma)
///   q1 | q2 ~ 0.5 N(c, s) + 0.5 N(-c, s),  s = exp(c - mu - q2 / 2)
/// The second argument of N(., .) is a standard deviation in both factors.
class FunnelTarget final : public TargetDistribution {
 public:
  explicit FunnelTarget(double mu = 3.0, double sigma = 1.0, double c = 1.0)
      : TargetDistribution(2), mu_(mu), sigma_(sigma), c_(c) {
    require(sigma > 0.0 && std::isfinite(sigma), "funnel: sigma must be positive");
    require(std::isfinite(mu) && std::isfinite(c), "funnel: mu and c must be finite");
  }

  std::string name() const override { return "funnel"; }
  bool has_exact_sampler() const override { return true; }

  double mu() const noexcept { return mu_; }
  double sigma() const noexcept { return sigma_; }
  double c() const noexcept { return c_; }

  /// Conditional standard deviation of q1 given q2.
  double conditional_scale(double q2) const { return std::exp(log_scale(q2)); }

  /// The two tips, (0, mu - 5) and (0, mu + 5), used for occupancy.
  std::vector<Vector> tips() const {
    return {(Vector(2) << 0.0, mu_ - 5.0).finished(), (Vector(2) << 0.0, mu_ + 5.0).finished()};
  }

  /// Centres of the four high-density blobs (q1 = +-c at q2 = mu -+ 5).
  std::vector<Vector> blob_centres() const {
    std::vector<Vector> out;
    for (double q2 : {mu_ - 5.0, mu_ + 5.0})
      for (double q1 : {c_, -c_}) out.push_back((Vector(2) << q1, q2).finished());
    return out;
  }

 protected:
  double log_density_impl(const Vector& q) const override {
    const double ls = log_scale(q[1]);
    const double inv_s2 = std::exp(-2.0 * ls);
    const double a = -0.5 * (q[0] - c_) * (q[0] - c_) * inv_s2;
    const double b = -0.5 * (q[0] + c_) * (q[0] + c_) * inv_s2;
    const double cond = log_add_exp(a, b) - ls;
    const double u = -0.5 * sq((q[1] - (mu_ - 5.0)) / sigma_);
    const double v = -0.5 * sq((q[1] - (mu_ + 5.0)) / sigma_);
    return cond + log_add_exp(u, v);
  }

  Vector grad_impl(const Vector& q) const override {
    const double ls = log_scale(q[1]);
    const double inv_s2 = std::exp(-2.0 * ls);
    const double dp = q[0] - c_;
    const double dm = q[0] + c_;
    const double a = -0.5 * dp * dp * inv_s2;
    const double b = -0.5 * dm * dm * inv_s2;
    const double lse = log_add_exp(a, b);
    const double ra = std::exp(a - lse);
    const double rb = std::exp(b - lse);

    const double m1 = mu_ - 5.0;
    const double m2 = mu_ + 5.0;
    const double u = -0.5 * sq((q[1] - m1) / sigma_);
    const double v = -0.5 * sq((q[1] - m2) / sigma_);
    const double luv = log_add_exp(u, v);
    const double ru = std::exp(u - luv);
    const double rv = std::exp(v - luv);

    Vector g(2);
    g[0] = -(ra * dp + rb * dm) * inv_s2;
    // d/dq2 of the conditional: each quadratic term scales like 1/s^2 with
    // ds/dq2 = -s/2, and -log s contributes +1/2.
    g[1] = ra * a + rb * b + 0.5 - (ru * (q[1] - m1) + rv * (q[1] - m2)) / (sigma_ * sigma_);
    return g;
  }

  Matrix exact_sample_impl(Rng& rng, Eigen::Index n) const override {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    Matrix out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double q2 = (coin(rng) ? mu_ + 5.0 : mu_ - 5.0) + sigma_ * n01(rng);
      const double q1 = (coin(rng) ? c_ : -c_) + conditional_scale(q2) * n01(rng);
      out(i, 0) = q1;
      out(i, 1) = q2;
    }
    return out;
  }

 private:
  static double sq(double x) { return x * x; }
  double log_scale(double q2) const { return c_ - mu_ - 0.5 * q2; }

  double mu_;
  double sigma_;
  double c_;
};

// ---------------------------------------------------------------------------

/// Mixture of densities concentrated on l1 spheres:
///   log pi(q) = log sum_i exp(-(|q - mu_i|_1 - r_i)^2 / (2 sigma^2)).
/// The gradient uses sign(0) = 0 on coordinate hyperplanes.
class L1ShellTarget final : public TargetDistribution {
 public:
  L1ShellTarget(std::vector<Vector> centres, std::vector<double> radii, double sigma, std::string label = "l1_shells")
      : TargetDistribution(centres.empty() ? 0 : centres.front().size()),
        centres_(std::move(centres)),
        radii_(std::move(radii)),
        sigma_(sigma),
        label_(std::move(label)) {
    require(!centres_.empty(), "l1 shells: need at least one shell");
    require(centres_.size() == radii_.size(), "l1 shells: one radius per centre");
    require(sigma > 0.0, "l1 shells: sigma must be positive");
    for (const auto& m : centres_) require_dim(m.size(), dim(), "l1 shell centre");
    for (double r : radii_) require(r > 0.0, "l1 shells: radii must be positive");
  }

  std::string name() const override { return label_; }
  const std::vector<Vector>& centres() const noexcept { return centres_; }
  const std::vector<double>& radii() const noexcept { return radii_; }
  double sigma() const noexcept { return sigma_; }

 protected:
  double log_density_impl(const Vector& q) const override {
    double acc = -INFINITY;
    for (std::size_t i = 0; i < centres_.size(); ++i) acc = log_add_exp(acc, term(i, q));
    return acc;
  }

  Vector grad_impl(const Vector& q) const override {
    std::vector<double> t(centres_.size());
    double total = -INFINITY;
    for (std::size_t i = 0; i < centres_.size(); ++i) {
      t[i] = term(i, q);
      total = log_add_exp(total, t[i]);
    }
    Vector g = Vector::Zero(dim());
    const double inv_s2 = 1.0 / (sigma_ * sigma_);
    for (std::size_t i = 0; i < centres_.size(); ++i) {
      const Vector r = q - centres_[i];
      const double w = std::exp(t[i] - total);
      const double dev = r.lpNorm<1>() - radii_[i];
      const Vector sgn = r.unaryExpr([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
      g.noalias() -= (w * dev * inv_s2) * sgn;
    }
    return g;
  }

 private:
  double term(std::size_t i, const Vector& q) const {
    const double dev = (q - centres_[i]).lpNorm<1>() - radii_[i];
    return -0.5 * dev * dev / (sigma_ * sigma_);
  }

  std::vector<Vector> centres_;
  std::vector<double> radii_;
  double sigma_;
  std::string label_;
};

// ---------------------------------------------------------------------------
// Experiment targets.

/// 0.5 N(mu, sigma2 I) + 0.5 N(-mu, sigma2 I) with mu = (5/sqrt d) 1 and
/// sigma2 = 1/d.
inline std::shared_ptr<GaussianMixtureTarget> make_scaled_bimodal(Eigen::Index d) {
  require(d >= 1, "bimodal: d >= 1");
  const double dd = static_cast<double>(d);
  const Vector m = Vector::Constant(d, 5.0 / std::sqrt(dd));
  const Matrix cov = Matrix::Identity(d, d) / dd;
  return std::make_shared<GaussianMixtureTarget>(
      std::vector<GaussianComponent>{{0.5, m, cov}, {0.5, -m, cov}}, "bimodal");
}

/// 0.5 N(b 1, Sigma1) + 0.5 N(-b 1, 2I - Sigma1), [Sigma1]_ij = 0.75^|i-j|.
inline std::shared_ptr<GaussianMixtureTarget> make_anisotropic_mixture(Eigen::Index d, double b = 2.0) {
  require(d >= 1, "anisotropic: d >= 1");
  Matrix s1(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) s1(i, j) = std::pow(0.75, static_cast<double>(std::abs(i - j)));
  const Matrix s2 = 2.0 * Matrix::Identity(d, d) - s1;
  const Vector m = Vector::Constant(d, b);
  return std::make_shared<GaussianMixtureTarget>(std::vector<GaussianComponent>{{0.5, m, s1}, {0.5, -m, s2}},
                                                 "anisotropic");
}

/// The bivariate example mixture: means +-(3, 3), correlations +-0.5.
inline std::shared_ptr<GaussianMixtureTarget> make_bivariate_example() {
  Matrix s1(2, 2), s2(2, 2);
  s1 << 1.0, 0.5, 0.5, 1.0;
  s2 << 1.0, -0.5, -0.5, 1.0;
  const Vector m = (Vector(2) << 3.0, 3.0).finished();
  return std::make_shared<GaussianMixtureTarget>(std::vector<GaussianComponent>{{0.5, m, s1}, {0.5, -m, s2}},
                                                 "bivariate_example");
}

/// 0.5 N(-b 1, sigma^2 I) + 0.5 N(b 1, sigma^2 I).
inline std::shared_ptr<GaussianMixtureTarget> make_symmetric_bimodal(Eigen::Index d, double b, double sigma) {
  require(d >= 1 && sigma > 0.0, "symmetric bimodal: d >= 1, sigma > 0");
  const Vector m = Vector::Constant(d, b);
  const Matrix cov = sigma * sigma * Matrix::Identity(d, d);
  return std::make_shared<GaussianMixtureTarget>(std::vector<GaussianComponent>{{0.5, -m, cov}, {0.5, m, cov}},
                                                 "symmetric_bimodal");
}

inline std::shared_ptr<L1ShellTarget> make_concentric_l1(Eigen::Index d, double sigma = 0.5) {
  std::vector<Vector> centres(3, Vector::Zero(d));
  return std::make_shared<L1ShellTarget>(std::move(centres), std::vector<double>{4.0, 8.0, 16.0}, sigma,
                                         "concentric_l1");
}

/// Axis-aligned default placement of the four inner shells at l1 distance 2
/// from the origin: (+-2, 0, ...) and (0, +-2, ...).
inline std::vector<Vector> default_nested_centres(Eigen::Index d) {
  require(d >= 2, "nested l1: d >= 2");
  std::vector<Vector> out;
  for (Eigen::Index axis = 0; axis < 2; ++axis) {
    for (double s : {2.0, -2.0}) {
      Vector m = Vector::Zero(d);
      m[axis] = s;
      out.push_back(m);
    }
  }
  return out;
}

inline std::shared_ptr<L1ShellTarget> make_nested_l1(Eigen::Index d, double sigma = 0.5,
                                                     std::vector<Vector> inner = {}) {
  if (inner.empty()) inner = default_nested_centres(d);
  std::vector<Vector> centres{Vector::Zero(d)};
  std::vector<double> radii{20.0};
  for (auto& m : inner) {
    require(std::abs(m.lpNorm<1>() - 2.0) <= 1e-12, "nested l1: inner centres must have l1 norm 2");
    centres.push_back(std::move(m));
    radii.push_back(2.0);
  }
  return std::make_shared<L1ShellTarget>(std::move(centres), std::move(radii), sigma, "nested_l1");
}

/// Equal-weight mixture of N(m_k, 0.01 I2) over the means listed in `path`:
/// exactly 20 non-empty lines of two whitespace-separated numbers.
inline std::shared_ptr<GaussianMixtureTarget> load_benchmark_means(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open benchmark means file '" + path + "'", 0);
  std::vector<Vector> means;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double x = 0.0, y = 0.0;
    std::string extra;
    if (!(ss >> x >> y)) throw ParseError("expected two numbers", lineno);
    if (ss >> extra) throw ParseError("expected exactly two numbers, found extra token '" + extra + "'", lineno);
    if (!std::isfinite(x) || !std::isfinite(y)) throw ParseError("non-finite coordinate", lineno);
    means.push_back((Vector(2) << x, y).finished());
    if (means.size() > 20) throw ParseError("more than 20 rows", lineno);
  }
  if (means.size() != 20)
    throw ParseError("expected 20 rows of means, found " + std::to_string(means.size()), lineno);
  std::vector<GaussianComponent> comps;
  for (auto& m : means) comps.push_back({1.0 / 20.0, m, 0.01 * Matrix::Identity(2, 2)});
  return std::make_shared<GaussianMixtureTarget>(std::move(comps), "benchmark20");
}

}  // namespace rahmc
