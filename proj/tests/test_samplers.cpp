#include "rahmc/diagnostics.hpp"
#include "rahmc/samplers.hpp"

#include <gtest/gtest.h>

using namespace rahmc;

namespace {

SamplerConfig fixed(SamplerKind kind, Eigen::Index d, double eps, long L, double gamma) {
  return SamplerConfig{kind, {eps, L, gamma}, KineticSpec(d), false};
}

}  // namespace

TEST(Acceptance, ProbabilityFormula) {
  EXPECT_DOUBLE_EQ(acceptance_probability(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(acceptance_probability(2.0, 1.0), 1.0);
  EXPECT_NEAR(acceptance_probability(1.0, 2.0), std::exp(-1.0), 1e-15);
  EXPECT_DOUBLE_EQ(acceptance_probability(1.0, INFINITY), 0.0);
  EXPECT_DOUBLE_EQ(acceptance_probability(1.0, NAN), 0.0);
}

TEST(Transition, ZeroFrictionRahmcEqualsHmc) {
  const auto t = make_bivariate_example();
  Rng a = make_rng(5, 0), b = make_rng(5, 0);
  Vector qa = Vector::Zero(2), qb = Vector::Zero(2);
  for (int i = 0; i < 200; ++i) {
    qa = transition(qa, a, *t, fixed(SamplerKind::RAHMC, 2, 0.2, 10, 0.0)).first;
    qb = transition(qb, b, *t, fixed(SamplerKind::HMC, 2, 0.2, 10, 0.0)).first;
  }
  EXPECT_EQ(qa, qb);
}

TEST(Transition, BlowUpIsARejection) {
  const auto t = make_scaled_bimodal(3);
  Rng rng = make_rng(1, 0);
  const Vector q = Vector::Constant(3, 0.5);
  const auto [next, rec] = transition(q, rng, *t, fixed(SamplerKind::RAHMC, 3, 100.0, 400, 5.0));
  EXPECT_TRUE(rec.blown_up);
  EXPECT_FALSE(rec.accepted);
  EXPECT_EQ(rec.alpha, 0.0);
  EXPECT_TRUE(std::isinf(rec.H_proposed));
  EXPECT_EQ(next, q);
}

TEST(Transition, RngConsumptionIndependentOfOutcome) {
  const auto t = make_scaled_bimodal(3);
  Rng a = make_rng(2, 0), b = make_rng(2, 0);
  transition(Vector::Constant(3, 0.5), a, *t, fixed(SamplerKind::RAHMC, 3, 100.0, 400, 5.0));
  transition(Vector::Constant(3, 0.5), b, *t, fixed(SamplerKind::RAHMC, 3, 0.01, 2, 0.1));
  EXPECT_EQ(a(), b());
}

TEST(RunChain, RecordsEveryIterationAndIsDeterministic) {
  const auto t = make_bivariate_example();
  RunOptions opt{300, 50, 17, 2, std::nullopt};
  const Chain a = run_chain(Vector::Zero(2), *t, fixed(SamplerKind::RAHMC, 2, 0.2, 20, 0.3), opt);
  const Chain b = run_chain(Vector::Zero(2), *t, fixed(SamplerKind::RAHMC, 2, 0.2, 20, 0.3), opt);
  EXPECT_EQ(a.samples.rows(), 300);
  EXPECT_EQ(a.accepted.size(), 300u);
  EXPECT_EQ(a.H_proposed.size(), 300u);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_GE(a.acceptance_rate, 0.0);
  EXPECT_LE(a.acceptance_rate, 1.0);
  EXPECT_EQ(a.chain_index, 2u);
  EXPECT_EQ(a.target_name, "bivariate_example");

  opt.chain_index = 3;
  const Chain c = run_chain(Vector::Zero(2), *t, fixed(SamplerKind::RAHMC, 2, 0.2, 20, 0.3), opt);
  EXPECT_NE(a.samples, c.samples);
}

TEST(RunChain, RejectedRowsRepeatThePreviousState) {
  const auto t = make_bivariate_example();
  RunOptions opt{500, 0, 4, 0, std::nullopt};
  const Chain c = run_chain(Vector::Zero(2), *t, fixed(SamplerKind::HMC, 2, 0.6, 10, 0.0), opt);
  for (Eigen::Index i = 1; i < c.size(); ++i)
    if (!c.accepted[static_cast<std::size_t>(i)]) EXPECT_EQ(c.samples.row(i), c.samples.row(i - 1));
}

TEST(RunChain, TunedChainFreezesParameters) {
  const auto t = make_scaled_bimodal(3);
  TunerSettings ts;
  ts.T = 50.0;
  RunOptions opt{200, 300, 1, 0, ts};
  SamplerConfig cfg;
  cfg.kinetic = KineticSpec(3);
  const Chain c = run_chain(Vector::Zero(3), *t, cfg, opt);
  ASSERT_TRUE(c.tuning.has_value());
  EXPECT_EQ(c.config.params.eps, c.tuning->eps);
  EXPECT_EQ(c.config.params.L, c.tuning->L);
  EXPECT_EQ(c.config.params.L % 2, 0);
}

TEST(RunChain, ContractChecks) {
  StdGaussianTarget t(2);
  EXPECT_THROW(run_chain(Vector::Zero(3), t, fixed(SamplerKind::HMC, 2, 0.1, 10, 0.0), RunOptions{}), ContractViolation);
  EXPECT_THROW(run_chain(Vector::Zero(2), t, fixed(SamplerKind::HMC, 2, 0.1, 10, 0.0), RunOptions{0}),
               ContractViolation);
  EXPECT_THROW(run_chain(Vector::Zero(2), t, fixed(SamplerKind::HMC, 2, -0.1, 10, 0.0), RunOptions{}),
               ContractViolation);
}

TEST(RunChain, GaussianMomentsUnderRahmc) {
  StdGaussianTarget t(2);
  RunOptions opt{8000, 200, 8, 0, std::nullopt};
  const Chain c = run_chain(Vector::Zero(2), t, fixed(SamplerKind::RAHMC, 2, 0.25, 6, 0.5), opt);
  EXPECT_NEAR(c.samples.col(0).mean(), 0.0, 0.08);
  EXPECT_NEAR(c.samples.col(1).squaredNorm() / 8000.0, 1.0, 0.08);
}

// Both high-density tips of the funnel are visited by tuned RAHMC at d = 2.
// gamma0 = 20: the tuner keeps gamma/eps at gamma0/eps0, and the default
// gamma0 = 1 is too weak a repelling push to leave the wide tip.
TEST(RunChain, FunnelTunedRahmcVisitsBothTips) {
  FunnelTarget f;
  int ok = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    TunerSettings ts;
    ts.gamma0 = 20.0;
    RunOptions opt{2000, 1000, seed, 0, ts};
    SamplerConfig cfg;
    cfg.kinetic = KineticSpec(2);
    const Chain c = run_chain(default_initial_state(2, seed, 0), f, cfg, opt);
    const auto occ = mode_occupancy(c.samples, f.tips());
    ok += (occ[0] > 0.05 && occ[1] > 0.05) ? 1 : 0;
  }
  EXPECT_GE(ok, 2);
}
