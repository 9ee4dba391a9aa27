#include "rahmc/diagnostics.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace rahmc;

namespace {

Matrix random_cloud(Rng& rng, Eigen::Index n, Eigen::Index d, double scale = 1.0) {
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = scale * standard_normal(rng, d).transpose();
  return x;
}

/// Exact OT for n = m uniform weights: the optimal plan is a permutation.
double brute_force_w2(const Matrix& a, const Matrix& b) {
  std::vector<int> perm(static_cast<std::size_t>(a.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      c += (a.row(static_cast<Eigen::Index>(i)) - b.row(perm[i])).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(a.rows()));
}

std::vector<double> ar1(double phi, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(n);
  x[0] = z(rng) / std::sqrt(1 - phi * phi);
  for (std::size_t t = 1; t < n; ++t) x[t] = phi * x[t - 1] + z(rng);
  return x;
}

}  // namespace

TEST(Sinkhorn, TwoSinglePointsGiveEuclideanDistance) {
  const Matrix x = (Matrix(1, 2) << 0.0, 0.0).finished();
  const Matrix y = (Matrix(1, 2) << 3.0, 4.0).finished();
  for (double lam : {1e-3, 1.0, 50.0}) {
    SinkhornParams p;
    p.lambda = lam;
    p.relative = false;
    EXPECT_NEAR(sinkhorn_distance(EmpiricalMeasure(x), EmpiricalMeasure(y), p).distance, 5.0, 1e-12);
  }
}

TEST(Sinkhorn, IdenticalCloudsAreClose) {
  Rng rng = make_rng(1, 0);
  const Matrix x = random_cloud(rng, 50, 2);
  SinkhornParams p;
  const auto r = sinkhorn_distance(EmpiricalMeasure(x), EmpiricalMeasure(x), p);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.distance, std::sqrt(r.lambda * std::log(50.0)));
  p.lambda = 1e-4;
  EXPECT_LE(sinkhorn_distance(EmpiricalMeasure(x), EmpiricalMeasure(x), p).distance, 1e-3);
}

TEST(Sinkhorn, MatchesBruteForceOnSmallInstances) {
  Rng rng = make_rng(2, 0);
  for (int inst = 0; inst < 20; ++inst) {
    const auto n = static_cast<Eigen::Index>(2 + inst % 7);
    const Matrix a = random_cloud(rng, n, 2), b = random_cloud(rng, n, 2, 1.5);
    SinkhornParams p;
    p.lambda = 1e-3;
    const double w = sinkhorn_distance(EmpiricalMeasure(a), EmpiricalMeasure(b), p).distance;
    const double exact = brute_force_w2(a, b);
    EXPECT_LE(std::abs(w - exact) / exact, 0.05) << "instance " << inst;
  }
}

TEST(Sinkhorn, Symmetric) {
  Rng rng = make_rng(3, 0);
  const Matrix a = random_cloud(rng, 40, 3), b = random_cloud(rng, 60, 3, 2.0);
  const double ab = sinkhorn_distance(EmpiricalMeasure(a), EmpiricalMeasure(b)).distance;
  const double ba = sinkhorn_distance(EmpiricalMeasure(b), EmpiricalMeasure(a)).distance;
  EXPECT_LE(std::abs(ab - ba), 1e-8 * (1 + ab));
}

TEST(Sinkhorn, MonotoneInSeparation) {
  Rng rng = make_rng(4, 0);
  const Matrix a = random_cloud(rng, 80, 2);
  double prev = -1.0;
  for (double shift : {0.5, 2.0, 6.0}) {
    Matrix b = a;
    b.col(0).array() += shift;
    SinkhornParams p;
    p.lambda = 0.01;
    p.relative = false;
    const double w = sinkhorn_distance(EmpiricalMeasure(a), EmpiricalMeasure(b), p).distance;
    EXPECT_GT(w, prev);
    EXPECT_NEAR(w, shift, 0.05 * shift + 0.02);
    prev = w;
  }
}

TEST(Sinkhorn, PlanMarginalsMatchWhenConverged) {
  Rng rng = make_rng(5, 0);
  const Matrix a = random_cloud(rng, 30, 2), b = random_cloud(rng, 45, 2, 3.0);
  Vector wa = Vector::Ones(30).cwiseProduct((Vector::Random(30).array() + 1.5).matrix());
  wa /= wa.sum();
  SinkhornParams p;
  p.keep_plan = true;
  p.tol = 1e-10;
  const auto r = sinkhorn_distance(EmpiricalMeasure(a, wa), EmpiricalMeasure(b), p);
  ASSERT_TRUE(r.converged);
  EXPECT_LE((r.plan.rowwise().sum() - wa).cwiseAbs().sum(), 1e-9);
  EXPECT_LE((r.plan.colwise().sum().transpose() - Vector::Constant(45, 1.0 / 45)).cwiseAbs().sum(), 1e-9);
}

TEST(Sinkhorn, ZeroWeightPointsGetNoMass) {
  const Matrix a = (Matrix(3, 1) << 0.0, 1.0, 100.0).finished();
  const Matrix b = (Matrix(2, 1) << 0.0, 1.0).finished();
  const Vector wa = (Vector(3) << 0.5, 0.5, 0.0).finished();
  SinkhornParams p;
  p.lambda = 1e-3;
  p.keep_plan = true;
  const auto r = sinkhorn_distance(EmpiricalMeasure(a, wa), EmpiricalMeasure(b), p);
  EXPECT_EQ(r.plan.row(2).sum(), 0.0);
  EXPECT_NEAR(r.distance, 0.0, 1e-6);
}

TEST(Sinkhorn, SeparatedClustersWithImbalancedMass) {
  // 52% / 48% against 50% / 50% across a gap of squared length 100: the 2% of
  // mass that must cross costs 2.0, which plain scaling iterations struggle
  // to move.
  Rng rng = make_rng(6, 0);
  Matrix a = random_cloud(rng, 100, 2, 0.1), b = random_cloud(rng, 100, 2, 0.1);
  for (Eigen::Index i = 0; i < 52; ++i) a(i, 0) += 10.0;
  for (Eigen::Index i = 0; i < 50; ++i) b(i, 0) += 10.0;
  SinkhornParams p;
  p.lambda = 0.01;
  p.relative = false;
  const auto r = sinkhorn_distance(EmpiricalMeasure(a), EmpiricalMeasure(b), p);
  EXPECT_TRUE(r.converged);
  EXPECT_GT(r.transport_cost, 0.02 * 90.0);
}

TEST(Sinkhorn, Validation) {
  const Matrix x = Matrix::Zero(2, 2);
  SinkhornParams p;
  p.lambda = 0.0;
  EXPECT_THROW(sinkhorn_distance(EmpiricalMeasure(x), EmpiricalMeasure(x), p), ContractViolation);
  EXPECT_THROW(EmpiricalMeasure(x, Vector::Constant(2, 0.3)), ContractViolation);
  EXPECT_THROW(sinkhorn_distance(EmpiricalMeasure(x), EmpiricalMeasure(Matrix::Zero(2, 3))), ContractViolation);
}

TEST(Sinkhorn, NonConvergenceIsFlaggedNotThrown) {
  Rng rng = make_rng(7, 0);
  const Matrix a = random_cloud(rng, 50, 2), b = random_cloud(rng, 50, 2, 2.0);
  SinkhornParams p;
  p.lambda = 1e-4;
  p.max_iter = 1;
  p.tol = 1e-15;
  const auto r = sinkhorn_distance(EmpiricalMeasure(a), EmpiricalMeasure(b), p);
  EXPECT_FALSE(r.converged);
  EXPECT_GT(r.marginal_error, 0.0);
}

TEST(Sinkhorn, SubsamplingIsSeeded) {
  Rng rng = make_rng(8, 0);
  const Matrix a = random_cloud(rng, 300, 2), b = random_cloud(rng, 300, 2, 1.5);
  SinkhornParams p;
  p.subsample = 100;
  const double w1 = sinkhorn_distance(EmpiricalMeasure(a), EmpiricalMeasure(b), p).distance;
  const double w2 = sinkhorn_distance(EmpiricalMeasure(a), EmpiricalMeasure(b), p).distance;
  EXPECT_EQ(w1, w2);
}

TEST(References, StuckChainValueAndMargin) {
  const Vector m = Vector::Constant(10, 5.0 / std::sqrt(10.0));
  EXPECT_NEAR(w2_reference_two_component(m, -m), 7.0710678118654755, 1e-12);
  EXPECT_NEAR(wasserstein_margin(5000, 10), 0.42668, 1e-5);
  EXPECT_DOUBLE_EQ(wasserstein_margin(1, 10), 1.0);
  EXPECT_LT(wasserstein_margin(5000, 50), wasserstein_margin(5000, 100));
}

TEST(Acf, Ar1MatchesPhiPowers) {
  const auto x = ar1(0.7, 100000, 1);
  const auto r = acf(x, 5);
  for (int k = 0; k <= 5; ++k) EXPECT_NEAR(r.rho[static_cast<std::size_t>(k)], std::pow(0.7, k), 0.02);
}

TEST(Acf, SinusoidPeriodicity) {
  std::vector<double> x(4000);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = std::sin(2 * std::numbers::pi * static_cast<double>(t) / 8.0);
  EXPECT_NEAR(acf(x, 8).rho[8], 1.0, 0.05);
}

TEST(Acf, ConstantSeriesIsDegenerate) {
  const std::vector<double> x(100, 3.0);
  EXPECT_TRUE(acf(x, 10).degenerate);
  const auto e = ess(x);
  EXPECT_TRUE(e.degenerate);
  EXPECT_EQ(e.ess, 1.0);
}

TEST(Ess, Ar1IntegratedTime) {
  const double phi = 0.5;
  const auto e = ess(ar1(phi, 200000, 2));
  EXPECT_NEAR(e.tau, (1 + phi) / (1 - phi), 0.15);
}

TEST(Ess, IidIsNearN) {
  const auto e = ess(ar1(0.0, 20000, 3));
  EXPECT_NEAR(e.ess / 20000.0, 1.0, 0.1);
}

TEST(Occupancy, NearestMode) {
  const Matrix s = (Matrix(4, 1) << -3.0, -1.0, 2.0, 0.0).finished();
  const auto occ = mode_occupancy(s, {Vector::Constant(1, -2.0), Vector::Constant(1, 2.0)});
  EXPECT_DOUBLE_EQ(occ[0], 0.75);  // the tie at 0 goes to the first mode
  EXPECT_DOUBLE_EQ(occ[1], 0.25);
}

TEST(DriftStats, KnownTStatistic) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const auto s = energy_drift_stats(x);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.t_statistic, 2.5 / (std::sqrt(5.0 / 3.0) / 2.0), 1e-12);
  // Two-sided p for t = 3.873 on 3 df.
  EXPECT_NEAR(s.p_value, 0.030466, 1e-5);
  const auto z = energy_drift_stats({0.0, 0.0, 0.0});
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.p_value, 1.0);
}

TEST(Ks, KolmogorovTail) {
  EXPECT_NEAR(kolmogorov_survival(1.3581), 0.05, 2e-4);
  EXPECT_NEAR(kolmogorov_survival(1.6276), 0.01, 1e-4);
  EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
}

TEST(Ks, DetectsShiftAndAcceptsTruth) {
  Rng rng = make_rng(9, 0);
  std::vector<double> good(2000), shifted(2000);
  for (auto& v : good) v = standard_normal(rng, 1)[0];
  for (auto& v : shifted) v = 0.3 + standard_normal(rng, 1)[0];
  EXPECT_GT(ks_test(good, std_normal_cdf).p_value, 0.01);
  EXPECT_LT(ks_test(shifted, std_normal_cdf).p_value, 1e-6);
}
