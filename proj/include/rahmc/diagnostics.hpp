#pragma once

// Sample-quality metrics: entropic optimal transport (Sinkhorn), ACF / ESS,
// mode occupancy, the energy-drift t-test and a Kolmogorov-Smirnov check.

#include "rahmc/core.hpp"
#include "rahmc/rng.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

namespace rahmc {

struct EmpiricalMeasure {
  Matrix points;  // n x d
  Vector weights;

  EmpiricalMeasure() = default;

  explicit EmpiricalMeasure(Matrix pts) : points(std::move(pts)) {
    require(points.rows() >= 1, "empirical measure: need at least one point");
    weights = Vector::Constant(points.rows(), 1.0 / static_cast<double>(points.rows()));
    validate();
  }

  EmpiricalMeasure(Matrix pts, Vector w) : points(std::move(pts)), weights(std::move(w)) { validate(); }

  Eigen::Index size() const noexcept { return points.rows(); }
  Eigen::Index dim() const noexcept { return points.cols(); }

  void validate() const {
    require(points.rows() >= 1, "empirical measure: need at least one point");
    require_dim(weights.size(), points.rows(), "empirical measure weights");
    require(points.allFinite(), "empirical measure: points must be finite");
    require((weights.array() >= 0.0).all(), "empirical measure: weights must be nonnegative");
    require(std::abs(weights.sum() - 1.0) <= 1e-12, "empirical measure: weights must sum to 1");
  }
};

struct SinkhornParams {
  /// Entropic regularisation. With `relative`, the effective value is
  /// lambda * median(C).
  double lambda = 0.05;
  bool relative = true;
  /// Budget of dual evaluations at the final regularisation.
  int max_iter = 1000;
  /// L1 violation of the column marginal (rows are matched exactly).
  double tol = 1e-9;
  /// Cap on points per side; larger measures are subsampled uniformly
  /// without replacement.
  std::optional<Eigen::Index> subsample = 2000;
  std::uint64_t subsample_seed = 0;
  bool keep_plan = false;
};

struct SinkhornResult {
  /// sqrt(sum_ij P_ij C_ij)
  double distance = 0.0;
  double transport_cost = 0.0;
  double lambda = 0.0;
  bool converged = false;
  double marginal_error = 0.0;
  int iterations = 0;
  Matrix plan;
};

namespace detail {

inline EmpiricalMeasure subsample_measure(const EmpiricalMeasure& m, Eigen::Index cap, std::uint64_t seed) {
  if (m.size() <= cap) return m;
  // Stream keyed on the point count so that swapping the arguments of a
  // distance picks the same subsets.
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(m.size()));
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(cap));
  std::sort(idx.begin(), idx.end());
  Matrix pts(cap, m.dim());
  Vector w(cap);
  for (Eigen::Index i = 0; i < cap; ++i) {
    pts.row(i) = m.points.row(idx[static_cast<std::size_t>(i)]);
    w[i] = m.weights[idx[static_cast<std::size_t>(i)]];
  }
  const double s = w.sum();
  if (s > 0.0) {
    w /= s;
  } else {
    w.setConstant(1.0 / static_cast<double>(cap));
  }
  return {std::move(pts), std::move(w)};
}

inline double median_of(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

inline Matrix squared_distances(const Matrix& X, const Matrix& Y) {
  const Vector xn = X.rowwise().squaredNorm();
  const Vector yn = Y.rowwise().squaredNorm();
  Matrix C = -2.0 * X * Y.transpose();
  C.colwise() += xn;
  C.rowwise() += yn.transpose();
  return C.cwiseMax(0.0);
}

}  // namespace detail

namespace detail {

/// Semi-dual of entropic OT in the column potential g. The row potential is
/// eliminated exactly, so row marginals always match and the gradient is the
/// column-marginal residual. Ct is the transposed cost, one source point per
/// column.
class SemiDual {
 public:
  SemiDual(const Matrix& Ct, const Vector& a, const Vector& b) : Ct_(Ct), a_(a), b_(b), log_a_(a.array().log()) {}

  /// Returns J(g) and fills f and colsum (column marginal of the plan).
  double eval(const Vector& g, double lam, Vector& f, Vector& colsum) const {
    const Eigen::Index n = Ct_.cols();
    f.resize(n);
    colsum.setZero(Ct_.rows());
    Eigen::ArrayXd z(Ct_.rows());
    for (Eigen::Index i = 0; i < n; ++i) {
      z = (g - Ct_.col(i)).array() / lam;
      const double mx = z.maxCoeff();
      z = (z - mx).max(-700.0).exp();
      const double s = z.sum();
      f[i] = lam * (log_a_[i] - mx - std::log(s));
      colsum.array() += (a_[i] / s) * z;
    }
    return a_.dot(f) + b_.dot(g);
  }

  /// Hessian of -J in g with the first coordinate pinned (J is invariant
  /// under constant shifts of g, so the full Hessian is singular).
  Matrix reduced_hessian(const Vector& g, const Vector& f, double lam) const {
    const Eigen::Index m = Ct_.rows();
    Matrix H = Matrix::Zero(m, m);
    Vector colsum = Vector::Zero(m);
    for (Eigen::Index i = 0; i < Ct_.cols(); ++i) {
      const Vector p = ((g - Ct_.col(i)).array() / lam + f[i] / lam).max(-700.0).exp().matrix();
      colsum += p;
      H.selfadjointView<Eigen::Lower>().rankUpdate(p, -1.0 / a_[i]);
    }
    H.diagonal() += colsum;
    return H.bottomRightCorner(m - 1, m - 1) / lam;  // lower triangle only, as LDLT reads it
  }

  /// Transport cost sum_ij P_ij C_ij of the plan at (f, g).
  double cost(const Vector& g, const Vector& f, double lam, Matrix* plan) const {
    double c = 0.0;
    if (plan) plan->resize(Ct_.cols(), Ct_.rows());
    for (Eigen::Index i = 0; i < Ct_.cols(); ++i) {
      const Vector p = ((g - Ct_.col(i)).array() / lam + f[i] / lam).max(-700.0).exp().matrix();
      c += p.dot(Ct_.col(i));
      if (plan) plan->row(i) = p.transpose();
    }
    return c;
  }

 private:
  const Matrix& Ct_;
  const Vector& a_;
  const Vector& b_;
  Vector log_a_;
};

}  // namespace detail

/// Entropic OT between two empirical measures with squared Euclidean cost.
/// The dual is solved in the log domain: limited-memory quasi-Newton ascent on
/// the semi-dual, with exact Sinkhorn (column scaling) steps as the fallback,
/// and the regularisation annealed from the cost scale down to the requested
/// value. Quasi-Newton steps matter for clustered data, where plain scaling
/// takes thousands of iterations to shift mass between well-separated groups.
/// The returned distance is the square root of the transport cost of the
/// regularised plan. Non-convergence is reported through `converged` and
/// `marginal_error`, not thrown.
inline SinkhornResult sinkhorn_distance(const EmpiricalMeasure& a_in, const EmpiricalMeasure& b_in,
                                        const SinkhornParams& prm = {}) {
  require(prm.lambda > 0.0 && std::isfinite(prm.lambda), "sinkhorn: lambda must be positive");
  require(prm.max_iter >= 1, "sinkhorn: max_iter >= 1");
  a_in.validate();
  b_in.validate();
  require_dim(b_in.dim(), a_in.dim(), "sinkhorn: second measure");

  const EmpiricalMeasure a = prm.subsample ? detail::subsample_measure(a_in, *prm.subsample, prm.subsample_seed) : a_in;
  const EmpiricalMeasure b = prm.subsample ? detail::subsample_measure(b_in, *prm.subsample, prm.subsample_seed) : b_in;

  // Points with zero mass get zero rows or columns in the plan.
  std::vector<Eigen::Index> ia, jb;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a.weights[i] > 0.0) ia.push_back(i);
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (b.weights[j] > 0.0) jb.push_back(j);
  const Vector wa = a.weights(ia);
  const Vector wb = b.weights(jb);
  const Matrix Ct = detail::squared_distances(b.points(jb, Eigen::all), a.points(ia, Eigen::all));

  double lambda = prm.lambda;
  if (prm.relative) {
    const double med = detail::median_of(std::vector<double>(Ct.data(), Ct.data() + Ct.size()));
    // All points coincide: any positive scale gives the same (zero) cost.
    lambda *= med > 0.0 ? med : 1.0;
  }

  SinkhornResult res;
  res.lambda = lambda;

  const detail::SemiDual sd(Ct, wa, wb);
  const Eigen::Index m = Ct.rows();
  constexpr int kHistory = 10;
  const bool newton = m >= 2 && static_cast<double>(m) * static_cast<double>(m) * static_cast<double>(Ct.cols()) <= 1.25e8;
  Vector g = Vector::Zero(m);
  Vector f, colsum;

  // Maximises J over g at regularisation lam; returns the final column error.
  auto solve = [&](double lam, double tol, int budget) -> double {
    std::vector<Vector> S, Y;
    std::vector<double> rho;
    double J = sd.eval(g, lam, f, colsum);
    ++res.iterations;
    Vector grad = wb - colsum;  // ascent direction of J
    double err = grad.cwiseAbs().sum();
    const Vector D = lam * wb.cwiseInverse();
    int used = 1;
    auto sinkhorn_step = [&] {
      g.array() += lam * (wb.array().log() - colsum.array().max(1e-300).log());
      S.clear();
      Y.clear();
      rho.clear();
    };
    while (err > tol && used < budget) {
      Vector q = grad;
      if (newton) {
        // Small problems: exact Newton directions, which cope with the
        // ill-conditioning that leaves quasi-Newton crawling near 1e-8.
        const Eigen::LDLT<Matrix> ldlt(sd.reduced_hessian(g, f, lam));
        q.setZero();
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) q.tail(m - 1) = ldlt.solve(grad.tail(m - 1));
        if (!q.allFinite()) q.setZero();
      } else {
      // Two-loop recursion, preconditioned by the diagonal of the Hessian.
      std::vector<double> al(S.size());
      for (std::size_t k = S.size(); k-- > 0;) {
        al[k] = rho[k] * S[k].dot(q);
        q -= al[k] * Y[k];
      }
      double theta = 1.0;
      if (!S.empty()) theta = S.back().dot(Y.back()) / Y.back().dot(D.cwiseProduct(Y.back()));
      q = theta * D.cwiseProduct(q);
      for (std::size_t k = 0; k < S.size(); ++k) q += (al[k] - rho[k] * Y[k].dot(q)) * S[k];
      }

      const double slope = grad.dot(q);
      bool moved = false;
      if (slope > 0.0) {
        Vector f_new, cs_new;
        for (double t = 1.0; t > 1e-6 && used < budget; t *= 0.5) {
          const Vector g_new = g + t * q;
          const double J_new = sd.eval(g_new, lam, f_new, cs_new);
          ++used;
          ++res.iterations;
          const Vector grad_new = wb - cs_new;
          // Close to the optimum the increase in J is below round-off; a
          // step that keeps J flat and shrinks the residual is still progress.
          const bool armijo = J_new >= J + 1e-4 * t * slope;
          const bool flat = J_new >= J - 1e-13 * (1.0 + std::abs(J)) && grad_new.cwiseAbs().sum() < err;
          if (std::isfinite(J_new) && (armijo || flat)) {
            Vector s = g_new - g;
            Vector y = grad - grad_new;  // gradient of -J changes by -(grad_new - grad)
            const double sy = s.dot(y);
            if (sy > 1e-300) {
              S.push_back(std::move(s));
              Y.push_back(std::move(y));
              rho.push_back(1.0 / sy);
              if (S.size() > kHistory) {
                S.erase(S.begin());
                Y.erase(Y.begin());
                rho.erase(rho.begin());
              }
            }
            g = g_new;
            f = std::move(f_new);
            colsum = std::move(cs_new);
            J = J_new;
            grad = grad_new;
            moved = true;
            break;
          }
        }
      }
      if (!moved) {
        // No sufficient increase (or round-off near the optimum): a plain
        // scaling step always increases the dual.
        sinkhorn_step();
        J = sd.eval(g, lam, f, colsum);
        ++used;
        ++res.iterations;
        grad = wb - colsum;
      }
      err = grad.cwiseAbs().sum();
    }
    return err;
  };

  const double cmax = Ct.maxCoeff();
  std::vector<double> schedule;
  for (double l = cmax; l > 2.0 * lambda; l *= 0.5) schedule.push_back(l);
  for (double l : schedule) solve(l, std::max(prm.tol, 1e-6), 200);
  res.marginal_error = solve(lambda, prm.tol, prm.max_iter);
  res.converged = res.marginal_error <= prm.tol;

  Matrix P;
  res.transport_cost = std::max(0.0, sd.cost(g, f, lambda, prm.keep_plan ? &P : nullptr));
  res.distance = std::sqrt(res.transport_cost);
  if (prm.keep_plan) {
    res.plan = Matrix::Zero(a.size(), b.size());
    res.plan(ia, jb) = P;
  }
  return res;
}

/// W2 between one component N(mu1, s^2 I) and the equal mixture of
/// N(mu1, s^2 I) and N(mu2, s^2 I): |mu1 - mu2| / sqrt(2).
inline double w2_reference_two_component(const Vector& mu1, const Vector& mu2) {
  require_dim(mu2.size(), mu1.size(), "w2_reference");
  return (mu1 - mu2).norm() / std::sqrt(2.0);
}

/// Expected Wasserstein estimation error scale n^(-1/d).
inline double wasserstein_margin(double n, double d) {
  require(n >= 1.0 && d >= 1.0, "wasserstein_margin: n >= 1 and d >= 1");
  return std::pow(n, -1.0 / d);
}

// ---------------------------------------------------------------------------

struct AcfResult {
  std::vector<double> rho;
  bool degenerate = false;
};

inline AcfResult acf(const std::vector<double>& x, std::size_t max_lag) {
  require(max_lag >= 1 && x.size() > max_lag, "acf: need n > max_lag >= 1");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  std::vector<double> c(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) c[t] = x[t] - mean;
  const double c0 = std::inner_product(c.begin(), c.end(), c.begin(), 0.0);
  AcfResult r;
  if (!(c0 > 0.0)) {
    r.rho.assign(max_lag + 1, 1.0);
    r.degenerate = true;
    return r;
  }
  r.rho.resize(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < c.size(); ++t) s += c[t] * c[t + k];
    r.rho[k] = s / c0;
  }
  return r;
}

struct EssResult {
  double ess = 0.0;
  /// Integrated autocorrelation time n / ESS.
  double tau = 0.0;
  bool degenerate = false;
};

/// ESS = n / (1 + 2 sum rho_k), truncated by Geyer's initial positive
/// sequence on consecutive pair sums rho_{2m} + rho_{2m+1}.
inline EssResult ess(const std::vector<double>& x) {
  require(x.size() >= 10, "ess: need at least 10 values");
  const std::size_t n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::vector<double> c(n);
  for (std::size_t t = 0; t < n; ++t) c[t] = x[t] - mean;
  const double c0 = std::inner_product(c.begin(), c.end(), c.begin(), 0.0);
  EssResult r;
  if (!(c0 > 0.0)) {
    r.ess = 1.0;
    r.tau = static_cast<double>(n);
    r.degenerate = true;
    return r;
  }
  auto rho = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += c[t] * c[t + k];
    return s / c0;
  };
  double sum_pairs = 0.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double gamma = rho(2 * m) + rho(2 * m + 1);
    if (!(gamma > 0.0)) break;
    sum_pairs += gamma;
  }
  r.tau = std::max(-1.0 + 2.0 * sum_pairs, 1.0 / static_cast<double>(x.size()));
  r.ess = static_cast<double>(x.size()) / r.tau;
  return r;
}

// ---------------------------------------------------------------------------

/// Fraction of rows of `samples` whose nearest mode (Euclidean, ties to the
/// lowest index) is each entry of `modes`.
inline std::vector<double> mode_occupancy(const Matrix& samples, const std::vector<Vector>& modes) {
  require(!modes.empty(), "mode_occupancy: need at least one mode");
  require(samples.rows() >= 1, "mode_occupancy: need samples");
  for (const auto& m : modes) require_dim(m.size(), samples.cols(), "mode_occupancy: mode");
  std::vector<double> count(modes.size(), 0.0);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < modes.size(); ++k) {
      const double dd = (samples.row(i).transpose() - modes[k]).squaredNorm();
      if (dd < best_d) {
        best_d = dd;
        best = k;
      }
    }
    count[best] += 1.0;
  }
  for (auto& c : count) c /= static_cast<double>(samples.rows());
  return count;
}

// ---------------------------------------------------------------------------

struct DriftStats {
  double mean = 0.0;
  double sd = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
  bool degenerate = false;
};

/// Two-sided one-sample t-test of zero mean.
inline DriftStats energy_drift_stats(const std::vector<double>& drifts) {
  require(drifts.size() >= 2, "energy_drift_stats: need N >= 2");
  const double n = static_cast<double>(drifts.size());
  DriftStats s;
  s.mean = std::accumulate(drifts.begin(), drifts.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : drifts) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / (n - 1.0));
  if (!(s.sd > 0.0)) {
    s.degenerate = true;
    s.t_statistic = s.mean == 0.0 ? 0.0 : std::copysign(INFINITY, s.mean);
    s.p_value = s.mean == 0.0 ? 1.0 : 0.0;
    return s;
  }
  s.t_statistic = s.mean / (s.sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  s.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(s.t_statistic))));
  return s;
}

// ---------------------------------------------------------------------------

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Kolmogorov limiting survival function Q(x) = 2 sum (-1)^(k-1) exp(-2 k^2 x^2).
inline double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

/// One-sample KS test against a continuous CDF (Stephens' small-sample
/// correction for the p-value).
inline KsResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf) {
  require(!x.empty(), "ks_test: empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  KsResult r;
  r.statistic = d;
  r.n = x.size();
  const double sn = std::sqrt(n);
  r.p_value = kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d);
  return r;
}

inline double std_normal_cdf(double x) { return boost::math::cdf(boost::math::normal(0.0, 1.0), x); }

}  // namespace rahmc
