// Tune RAHMC on a two-mode mixture, draw samples, and compare them with
// exact draws.

#include <rahmc/diagnostics.hpp>
#include <rahmc/samplers.hpp>

#include <iostream>

int main() {
  using namespace rahmc;
  const Eigen::Index d = 3;
  const auto target = make_scaled_bimodal(d);

  SamplerConfig cfg;
  cfg.kind = SamplerKind::RAHMC;
  cfg.kinetic = KineticSpec(d);

  TunerSettings ts;
  ts.T = 50.0;  // long trajectories: the repel stage has time to leave a mode
  RunOptions opt{5000, 1000, /*seed=*/1, /*chain_index=*/0, ts};

  const Chain chain = run_chain(default_initial_state(d, 1, 0), *target, cfg, opt);
  std::cout << "eps " << chain.config.params.eps << ", gamma " << chain.config.params.gamma << ", L "
            << chain.config.params.L << ", acceptance " << chain.acceptance_rate << '\n';

  const auto occ = mode_occupancy(chain.samples, target->means());
  std::cout << "mode occupancy " << occ[0] << " / " << occ[1] << '\n';

  Rng rng = make_rng(1, 99);
  SinkhornParams sp;
  sp.lambda = 0.1;
  sp.relative = false;
  const auto w = sinkhorn_distance(EmpiricalMeasure(chain.samples), EmpiricalMeasure(target->exact_sample(rng, 5000)), sp);
  std::cout << "Sinkhorn W2 vs exact draws " << w.distance << (w.converged ? "" : " (not converged)") << '\n';
}
