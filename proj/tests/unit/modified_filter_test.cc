#include "cbfqp/modified_filter.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "cbfqp/equilibria.hpp"
#include "cbfqp/scenarios.hpp"
#include "cbfqp/simulator.hpp"
#include "test_util.h"

namespace cbfqp {
namespace {

using testing::VectorNear;

SamplingConfig sampling_for(const Scenario& s, std::size_t count = 10000) {
  return SamplingConfig{s.box, count, 7};
}

TEST(SontagTest, ClosedFormValues) {
  const Scenario s = load_scenario("example3");
  // LfV = 1, ‖LgV‖² = 1: gain 1 + √2.
  EXPECT_TRUE(VectorNear(sontag_formula(s.model, s.certs, State{{1.0, 0.0}}),
                         Vector{{-(1.0 + std::sqrt(2.0)), 0.0}}, 1e-15));
  EXPECT_EQ(sontag_formula(s.model, s.certs, State::Zero(2)), Vector::Zero(2));
}

TEST(SontagTest, AcceptedForFullyActuatedPlant) {
  const Scenario s = load_scenario("example3");
  const NominalController nominal = sontag_nominal(s.model, s.certs, sampling_for(s));
  EXPECT_EQ(nominal.provenance, NominalProvenance::kSontag);
  EXPECT_LE(check_nominal(s.model, s.certs, nominal, sampling_for(s)).worst, 1e-8);
}

TEST(SontagTest, RejectedWithoutActuation) {
  const Scenario base = load_scenario("example3");
  const DynamicsModel unactuated(
      2, 1, [](const State& x) -> Vector { return x; },
      [](const State&) -> Matrix { return Matrix::Zero(2, 1); });
  EXPECT_THROW(sontag_nominal(unactuated, base.certs, sampling_for(base)), NominalRejectedError);
}

TEST(NominalTest, BuiltinNominalsMeetClfCondition) {
  for (const char* name : {"example5", "example6", "example5-noobstacle"}) {
    const Scenario s = load_scenario(name);
    ASSERT_TRUE(s.nominal.has_value());
    const NominalCheck chk = check_nominal(s.model, s.certs, *s.nominal, sampling_for(s));
    EXPECT_EQ(chk.count, 10000u);
    EXPECT_LE(chk.worst, 1e-8) << name << " at " << chk.worst_state.transpose();
    EXPECT_NO_THROW(require_clf_compatible(s.model, s.certs, *s.nominal, sampling_for(s)));
  }
}

TEST(NominalTest, DestabilizingNominalRejected) {
  const Scenario s = load_scenario("example3");
  const auto bad = NominalController::linear(Matrix::Identity(2, 2));
  EXPECT_THROW(require_clf_compatible(s.model, s.certs, bad, sampling_for(s)),
               NominalRejectedError);
}

TEST(TransformTest, DriftAbsorbsNominal) {
  const Scenario s = load_scenario("example5");
  const TransformedModel t = transform(s.model, *s.nominal);
  EXPECT_TRUE(VectorNear(t.drift(State{{1.0, 2.0}}), Vector{{-1.0, -2.0}}, 0.0));
  EXPECT_EQ(t.as_model().input_map(State{{1.0, 2.0}}), Matrix::Identity(2, 2));

  const Scenario s6 = load_scenario("example6");
  const TransformedModel t6 = transform(s6.model, *s6.nominal);
  // (x2, x1) + (0, −2x1 − x2).
  EXPECT_TRUE(VectorNear(t6.drift(State{{1.0, 3.0}}), Vector{{3.0, -4.0}}, 0.0));
}

TEST(TransformTest, FilteredControlValues) {
  const Scenario s = load_scenario("example5");
  const TransformedModel t = transform(s.model, *s.nominal);
  const QPWeight p(1.0);
  // Far from the obstacle the correction vanishes.
  EXPECT_TRUE(VectorNear(filtered_control(t, s.certs, p, State{{1.0, 0.0}}),
                         Vector{{-2.0, 0.0}}, 1e-15));
  // On the obstacle top the correction cancels the transformed drift.
  EXPECT_TRUE(VectorNear(filtered_control(t, s.certs, p, State{{0.0, 6.0}}),
                         Vector{{0.0, -6.0}}, 1e-12));
  EXPECT_EQ(filtered_solution(t, s.certs, p, State{{0.0, 6.0}}).region,
            RegionTag::kClfOnCbfOn2);
}

TEST(TransformTest, SlackVanishesNearOrigin) {
  for (const char* name : {"example5", "example6"}) {
    const Scenario s = load_scenario(name);
    const TransformedModel t = transform(s.model, *s.nominal);
    BoxSampler sampler(square_box(0.5), 3);
    for (double pv : {0.1, 1.0, 10.0}) {
      const QPWeight p(pv);
      for (int k = 0; k < 2000; ++k) {
        const State x = sampler();
        if (x.norm() > 0.5) continue;
        EXPECT_LE(filtered_solution(t, s.certs, p, x).delta, 1e-9) << name;
      }
    }
  }
}

TEST(ModifiedEquilibriaTest, OnlyOriginAndPersistentBoundaryRoots) {
  for (const char* name : {"example5", "example6"}) {
    const Scenario s = load_scenario(name);
    const TransformedModel t = transform(s.model, *s.nominal);
    for (double pv : s.p_defaults) {
      const QPWeight p(pv);
      const auto found = find_equilibria(t.as_model(), s.certs, p, SearchGrid::uniform(s.box, 81));
      EXPECT_EQ(found.count(EquilibriumKind::kOrigin), 1u) << name;
      EXPECT_EQ(found.count(EquilibriumKind::kInterior), 0u) << name << " p=" << pv;
      EXPECT_EQ(found.count(EquilibriumKind::kBoundary1), 0u) << name;
      EXPECT_TRUE(interior_certificate(t.as_model(), s.certs, p, SearchGrid::uniform(s.box, 81))
                      .holds);
    }
  }
}

TEST(ModifiedEquilibriaTest, OriginLocallyAttractive) {
  for (const char* name : {"example5", "example6"}) {
    const Scenario s = load_scenario(name);
    IntegratorConfig cfg;
    cfg.horizon = 10.0;
    for (const State& x0 : ring_starts(8, 0.1)) {
      const Trajectory tr = integrate(s, ControllerMode::kModified, 1.0, x0, cfg);
      ASSERT_TRUE(tr.error.empty()) << tr.error;
      EXPECT_LE(tr.final_state().norm(), 1e-3) << name << " from " << x0.transpose();
    }
  }
}

TEST(LipschitzTest, Example2LghVanishesButBarrierDataDoesNot) {
  const Scenario s = load_scenario("example2");
  const LipschitzReport rep = lipschitz_precondition(s.model, s.certs, sampling_for(s));
  EXPECT_FALSE(rep.condition_i);
  EXPECT_LE(rep.min_lgh_norm, 1e-6);
  EXPECT_TRUE(rep.condition_ii);
  EXPECT_EQ(rep.samples, 10000u);
}

TEST(LipschitzTest, DiskObstacle) {
  const Scenario s = load_scenario("example1");
  const LipschitzReport rep = lipschitz_precondition(s.model, s.certs, sampling_for(s));
  // ∇h vanishes at the disk centre. Here Fh = 12 − ‖x‖², so
  // ‖(Fh, Lgh)‖² = (12 − ‖x‖²)² + 4x1² + 4(x2 − 4)², minimal (1.03021…) at
  // (0, 3.505) per an independent BFGS run.
  EXPECT_FALSE(rep.condition_i);
  EXPECT_TRUE(VectorNear(rep.min_lgh_state, Vector{{0.0, 4.0}}, 1e-6));
  EXPECT_TRUE(rep.condition_ii);
  EXPECT_NEAR(rep.min_m_residual, 1.0302102701777, 1e-9);
  EXPECT_TRUE(VectorNear(rep.min_m_state, Vector{{0.0, 3.505}}, 1e-3));
}

TEST(LipschitzTest, ConstantBarrier) {
  const Scenario s = load_scenario("example5-noobstacle");
  const LipschitzReport rep = lipschitz_precondition(s.model, s.certs, sampling_for(s));
  EXPECT_FALSE(rep.condition_i);
  EXPECT_TRUE(rep.condition_ii);
  EXPECT_NEAR(rep.min_m_residual, 1.0, 1e-12);
}

TEST(LipschitzTest, NeedsEnoughSamples) {
  const Scenario s = load_scenario("example1");
  EXPECT_THROW(lipschitz_precondition(s.model, s.certs, sampling_for(s, 9999)),
               ConfigurationError);
}

TEST(RoaTest, NoObstacleCoversTheBox) {
  const Scenario s = load_scenario("example5-noobstacle");
  const TransformedModel t = transform(s.model, *s.nominal);
  RoaOptions opt;
  opt.box = s.box;
  const RoaEstimate est = estimate_roa(t, s.certs, QPWeight(1.0), opt);
  EXPECT_DOUBLE_EQ(est.eta, 64.0);  // V at the corners of ±8
  EXPECT_FALSE(est.blocking_point.has_value());
  EXPECT_EQ(est.levels_tested, 1);
  ASSERT_TRUE(est.sampled_radius.has_value());
  EXPECT_DOUBLE_EQ(*est.sampled_radius, std::sqrt(128.0));
}

TEST(RoaTest, ObstacleBlocksAboveItsNearestLevel) {
  // The obstacle disk reaches down to ‖x‖ = 2, V = 2; the doubly active domain
  // starts further out, so η is at least 8 (radius 4) with this p.
  const Scenario s = load_scenario("example5");
  const TransformedModel t = transform(s.model, *s.nominal);
  RoaOptions opt;
  opt.box = s.box;
  const RoaEstimate est = estimate_roa(t, s.certs, QPWeight(1.0), opt);
  EXPECT_GE(est.eta, 8.0);
  EXPECT_LE(est.eta, 8.5);
  ASSERT_TRUE(est.blocking_point.has_value());
  EXPECT_EQ(filtered_solution(t, s.certs, QPWeight(1.0), *est.blocking_point).region,
            RegionTag::kClfOnCbfOn2);
  EXPECT_GT(est.levels_tested, 1);
}

TEST(RoaTest, ShrinkingTheObstacleGrowsEta) {
  // Same center, smaller disk. On the x2 axis the doubly active domain is
  // anchored at the center for every radius, so the gain is a sampling effect
  // off the axis and stays small.
  Scenario s = load_scenario("example5");
  const TransformedModel t = transform(s.model, *s.nominal);
  RoaOptions opt;
  opt.box = s.box;
  const double eta_large = estimate_roa(t, s.certs, QPWeight(1.0), opt).eta;
  s.certs.cbf = scenarios::disk_obstacle(1.0);
  const double eta_small = estimate_roa(t, s.certs, QPWeight(1.0), opt).eta;
  EXPECT_GT(eta_small, eta_large);
  EXPECT_GE(eta_large, 8.0);
  EXPECT_LE(eta_small, 9.0);
}

TEST(RoaTest, UnpopulatedLevelIsUnavailable) {
  const Scenario s = load_scenario("example5");
  const TransformedModel t = transform(s.model, *s.nominal);
  RoaOptions opt;
  opt.box = s.box;
  opt.max_draw_factor = 1;
  EXPECT_THROW(estimate_roa(t, s.certs, QPWeight(1.0), opt), EstimateUnavailableError);
}

}  // namespace
}  // namespace cbfqp
