#include <gtest/gtest.h>

#include "phaselock/gradcheck.hpp"
#include "phaselock/kuramoto.hpp"
#include "phaselock/rpa.hpp"
#include "support.hpp"

using namespace phaselock;
using namespace testing_support;

namespace {

// Channel 0 has exactly the reference phase; channels 1, 2 are other tones.
RPAProblem locked_problem() {
  RPAProblem p;
  p.mixtures = exact_tones({5, 9, 14}, {0.4, 1.0, -2.0}, {1.0, 0.8, 1.3}, 512);
  const auto ph = p.mixtures.phase_of(0);
  p.ref_phase.assign(ph.begin(), ph.end());
  return p;
}

}  // namespace

TEST(RpaObjective, IndicatorOfLockedChannelIsOne) {
  const RPAProblem p = locked_problem();
  EXPECT_NEAR(rpa_objective(p, Eigen::Vector3d(1, 0, 0)), 1.0, 1e-12);
}

TEST(RpaObjective, IndependentReferenceIsSmall) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  RPAProblem p;
  p.mixtures = exact_tones({40, 93}, {0.0, 1.0}, {1.0, 1.0}, 10000);
  p.ref_phase.resize(10000);
  for (double& v : p.ref_phase) v = u(rng);
  EXPECT_LT(rpa_objective(p, Eigen::Vector2d(0.6, 0.8)), 0.05);
}

TEST(RpaObjective, ScaleInvariant) {
  std::mt19937_64 rng(3);
  const RPAProblem p = locked_problem();
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd w = random_gaussian_vector(rng, 3);
    const double f = rpa_objective(p, w);
    EXPECT_NEAR(rpa_objective(p, 2.0 * w), f, 1e-12);
    EXPECT_NEAR(rpa_objective(p, 0.3 * w), f, 1e-12);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0 + 1e-12);
  }
}

TEST(RpaObjective, AmplitudeFloorNamesSampleCount) {
  RPAProblem p;
  p.mixtures = exact_tones({5, 5}, {0.2, 0.2}, {1.0, 1.0}, 128);
  p.ref_phase.assign(128, 0.0);
  try {
    rpa_objective(p, Eigen::Vector2d(1.0, -1.0));
    FAIL() << "expected amplitude-floor error";
  } catch (const AmplitudeFloorError& e) {
    EXPECT_EQ(e.offending_samples(), 128u);
    EXPECT_NE(std::string(e.what()).find("128"), std::string::npos) << e.what();
  }
}

TEST(RpaObjective, LengthMismatchRejected) {
  RPAProblem p = locked_problem();
  p.ref_phase.pop_back();
  EXPECT_THROW(rpa_objective(p, Eigen::Vector3d(1, 0, 0)), InvalidArgument);
}

TEST(RpaGradient, SingleChannelIsZero) {
  RPAProblem p;
  p.mixtures = exact_tones({3}, {0.0}, {1.0}, 64);
  p.ref_phase.assign(64, 0.5);
  const Eigen::VectorXd g = rpa_gradient(p, Eigen::VectorXd::Constant(1, 0.7));
  EXPECT_LT(std::abs(g(0)), 1e-15);
}

TEST(RpaGradient, TangentToTheSphere) {
  std::mt19937_64 rng(5);
  const RPAProblem p = locked_problem();
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd w = random_gaussian_vector(rng, 3);
    const Eigen::VectorXd g = rpa_gradient(p, w);
    EXPECT_LE(std::abs(w.dot(g)), 1e-10 * g.norm());
  }
}

TEST(RpaGradient, VanishesAtPerfectLock) {
  EXPECT_LT(rpa_gradient(locked_problem(), Eigen::Vector3d(1, 0, 0)).norm(), 1e-6);
}

TEST(RpaGradient, MatchesFiniteDifferences) {
  const auto s = gradcheck::run(gradcheck::Algorithm::RPA, 25, 17);
  EXPECT_GT(s.evaluated(), 20);
  EXPECT_LT(s.max_relative_error(), 1e-5);
  EXPECT_LT(s.max_tangency(), 1e-10);
}

TEST(RpaSolve, RecoversReferencedSourceFromMixture) {
  std::mt19937_64 rng(21);
  const Partition part = contiguous_partition({1, 1});
  const auto net = OscillatorNetwork::clustered(part, Eigen::Vector2d(1.0, 1.7), 0.0, 0.0);
  SimulationOptions opt;
  opt.samples = 8000;
  opt.noise = 0.05;
  opt.seed = 4;
  const PhaseTrajectory traj = simulate(net, Eigen::Vector2d(0.3, -1.0), opt);
  const SignalMatrix sources = synth_sources(traj, {AmplitudeKind::SmoothRandom, 4});
  const SignalMatrix x = mix(sources, well_conditioned_mixing(rng, 2, 5.0));

  const std::size_t trim = 400;
  RPAProblem p;
  p.mixtures = analytic(x).trimmed(trim);
  for (std::size_t t = trim; t + trim < sources.samples(); ++t)
    p.ref_phase.push_back(traj.phases(0, static_cast<Eigen::Index>(t)));
  OptimizerConfig cfg;
  cfg.seed = 9;
  const RPASolution sol = rpa_solve(p, cfg, 3);
  EXPECT_GT(sol.plv.magnitude(), 0.99);
  EXPECT_NEAR(sol.w.norm(), 1.0, 1e-12);
  for (double f0 : sol.start_objectives) EXPECT_GE(rpa_objective(p, sol.w), f0);
}

TEST(RpaSolve, ZeroIterationsReturnsStart) {
  const RPAProblem p = locked_problem();
  OptimizerConfig cfg;
  cfg.max_iters = 0;
  cfg.seed = 5;
  const RPASolution sol = rpa_solve(p, cfg, 1);
  std::mt19937_64 rng(5);
  const Eigen::VectorXd expected = random_unit_vector(rng, 3);
  EXPECT_LT((sol.w - expected).norm(), 1e-15);
  EXPECT_EQ(sol.trace.termination, Termination::MaxIters);
}

TEST(RpaSolve, RejectsNoStarts) {
  EXPECT_THROW(rpa_solve(locked_problem(), OptimizerConfig{}, 0), InvalidArgument);
}

TEST(ReferencePhase, FromSignalMatchesPhase) {
  std::vector<double> s(256);
  for (std::size_t t = 0; t < s.size(); ++t) s[t] = std::cos(kTwoPi * 6 * static_cast<double>(t) / 256 + 0.3);
  const auto p = reference_phase_from_signal(s);
  for (std::size_t t = 0; t < s.size(); ++t)
    EXPECT_LT(wrapped_distance(p[t], kTwoPi * 6 * static_cast<double>(t) / 256 + 0.3), 1e-9);
}
