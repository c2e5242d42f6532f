#include <gtest/gtest.h>

#include <cmath>

#include "phaseamp/feedback.hpp"
#include "phaseamp/scenario.hpp"
#include "support/lemniscate_oracle.hpp"

using namespace phaseamp;

namespace {

// Encoder returns a fixed latent state whatever it observes; decoder echoes z.
struct FixedEncoder {
  LatentParams params;
  LatentState value;

  const LatentParams& latent() const { return params; }
  LatentState encode(const Vector&) const { return value; }
  Vector decode(const LatentState& z) const { return z.stacked(); }
  Matrix decode_batch(const Matrix& z) const { return z; }
};

LatentState state(double phi, double r) { return {Vector::Constant(1, phi), Vector::Constant(1, r)}; }

}  // namespace

TEST(LatentFeedbackStep, ZeroGainIsTheAnalyticAdvance) {
  const FixedEncoder m{LatentParams({1.3}, {0.7}, 0.05), state(2.0, 1.0)};
  const LatentState z = state(0.4, -0.3);
  const LatentState out = latent_feedback_step(z, Vector::Zero(2), m, FeedbackConfig{}, 0.05);
  const LatentState ref = advance(z, 0.05, m.params);
  EXPECT_EQ(out.phi, ref.phi);
  EXPECT_EQ(out.r, ref.r);
}

TEST(LatentFeedbackStep, MatchedEncodingIsOpenLoop) {
  const LatentState z = state(0.4, -0.3);
  const FixedEncoder m{LatentParams({1.3}, {0.7}, 0.05), z};
  const LatentState out = latent_feedback_step(z, Vector::Zero(2), m, FeedbackConfig{2.0, false, {}}, 0.05);
  const LatentState ref = advance(z, 0.05, m.params);
  EXPECT_EQ(out.phi, ref.phi);
  EXPECT_EQ(out.r, ref.r);
}

TEST(LatentFeedbackStep, HandEulerStep) {
  const FixedEncoder m{LatentParams({1.0}, {1.0}, 0.1), state(0.5, 0.0)};
  const LatentState out = latent_feedback_step(state(0.0, 0.0), Vector::Zero(2), m, FeedbackConfig{1.0, false, {}}, 0.1);
  EXPECT_NEAR(out.phi[0], 0.15, 1e-15);
  EXPECT_EQ(out.r[0], 0.0);
}

TEST(LatentFeedbackStep, PhaseErrorWrappedAfterOffset) {
  FeedbackConfig cfg{1.0, false, {0.0}};
  EXPECT_NEAR(latent_error(state(-3.0, 0.0), state(3.0, 0.0), cfg)[0], 6.0 - kTwoPi, 1e-15);
  cfg.phi_ff = {0.5};
  EXPECT_NEAR(latent_error(state(0.0, 1.0), state(3.0, 0.25), cfg)[0], 3.5 - kTwoPi, 1e-15);
  EXPECT_EQ(latent_error(state(0.0, 1.0), state(3.0, 0.25), cfg)[1], -0.75);
  cfg.phi_ff = {0.1, 0.2};
  EXPECT_THROW(cfg.validate(LatentParams({1.0}, {}, 0.1)), ShapeMismatch);
}

TEST(FeedbackConfig, CharacteristicScaling) {
  const LatentParams equal({2.0, 2.0}, {2.0, 2.0, 2.0}, 0.02);
  const FeedbackConfig cfg{0.02, true, {}};
  EXPECT_EQ(cfg.gains(equal), Vector::Constant(5, 0.02));
  const LatentParams mixed({2.0, 6.0}, {3.0}, 0.02);
  const Vector g = cfg.gains(mixed);
  EXPECT_DOUBLE_EQ(g[0], 0.02);
  EXPECT_DOUBLE_EQ(g[1], 0.06);
  EXPECT_DOUBLE_EQ(g[2], 0.03);
  EXPECT_EQ(FeedbackConfig::from_step_gain(0.05, 0.002).gain, 0.05 / 0.002);
  EXPECT_THROW((FeedbackConfig{-1.0, false, {}}.validate(mixed)), InvalidArgument);
}

// Plant held at x*: the phase error shrinks monotonically while it exceeds
// omega dt / g (g per step), then stays near that level.
TEST(LatentFeedbackStep, SynchronizesToAFrozenPlant) {
  const double dt = 0.05, omega = 1.2, g_step = 0.2;
  const FixedEncoder m{LatentParams({omega}, {0.5}, dt), state(1.0, 0.3)};
  const FeedbackConfig cfg = FeedbackConfig::from_step_gain(g_step, dt);
  const double threshold = omega * dt / g_step;
  LatentState z = state(-1.5, 0.0);
  double prev = std::abs(latent_error(z, m.value, cfg)[0]);
  for (int k = 0; k < 400; ++k) {
    z = latent_feedback_step(z, Vector::Zero(2), m, cfg, dt);
    const double err = std::abs(latent_error(z, m.value, cfg)[0]);
    if (prev > threshold) {
      EXPECT_LT(err, prev) << "step " << k;
    }
    prev = err;
  }
  EXPECT_LT(prev, threshold * 1.01);
  // amplitude settles where decay balances the correction: r* = g x / (1 - e^(-lambda dt) + g)
  const double e = std::exp(-0.5 * dt);
  EXPECT_NEAR(z.r[0], g_step * 0.3 / (1.0 - e + g_step), 1e-9);
}

TEST(LatentTracker, UncoupledRunIsTheClosedFormRollout) {
  const LatentParams p({1.7}, {0.4, 3.0}, 0.05);
  const FixedEncoder m{p, {Vector::Constant(1, 2.0), Vector::Constant(2, 0.5)}};
  const LatentState z0{Vector::Constant(1, 0.3), (Vector(2) << 1.0, -2.0).finished()};
  LatentTracker t(z0, p.dt());
  Rng rng(1);
  for (Index k = 1; k <= 500; ++k) {
    t.step(Vector::Constant(2, rng.normal()), m, FeedbackConfig{});
    const LatentState a = t.current(m), b = analytic_rollout(z0, k, p);
    ASSERT_EQ(a.phi, b.phi);
    ASSERT_EQ(a.r, b.r);
  }
}

TEST(DesiredOutput, LayoutSplitAndFallbackVelocity) {
  const FixedEncoder m{LatentParams({1.0}, {1.0}, 0.1), state(0.0, 0.0)};
  const ObservableLayout pv = ObservableLayout::position_velocity(1);
  const DesiredTarget a = desired_output(state(0.2, 0.5), m, pv);
  EXPECT_EQ(a.position[0], 0.2);
  EXPECT_EQ(a.velocity[0], 0.5);
  const ObservableLayout pos = ObservableLayout::positions_only(2);
  const DesiredTarget b = desired_output(state(0.2, 0.5), m, pos, Vector((Vector(2) << 0.1, 0.7).finished()), 0.1);
  EXPECT_NEAR(b.velocity[0], 1.0, 1e-12);
  EXPECT_NEAR(b.velocity[1], -2.0, 1e-12);
  const DesiredTarget c = desired_output(state(0.2, 0.5), m, pos);
  EXPECT_EQ(c.velocity, Vector::Zero(2));
  EXPECT_EQ(desired_output(state(0.2, 0.5), m, pv).position, a.position);
  EXPECT_THROW(desired_output(state(0.2, 0.5), m, ObservableLayout::positions_only(3)), ShapeMismatch);
}

// ---- closed-loop scenarios on the exact lemniscate model ------------------

namespace {

const LemniscateConfig kDemo;

ScenarioConfig scenario(ScenarioKind kind) {
  ScenarioConfig s;
  s.kind = kind;
  return s;
}

}  // namespace

TEST(Scenario, NominalTrackingWithExactModel) {
  const oracle::LemniscateModel m(kDemo);
  const Trajectory demo = generate_lemniscate_demo(kDemo);
  const auto layout = ObservableLayout::position_velocity(3);
  const auto fb = FeedbackConfig::from_step_gain(1e-3, demo.dt / 25);
  const EpisodeLog log = run_scenario(m, demo, layout, fb, scenario(ScenarioKind::nominal), 1);
  EXPECT_FALSE(log.diverged);
  EXPECT_EQ(log.compared, demo.steps());
  EXPECT_LT(log.tracking_rmse, 0.05 * kDemo.amplitude);
  EXPECT_EQ(log.samples.size(), static_cast<std::size_t>(demo.steps()));
}

TEST(Scenario, ZeroGainReproducesOpenLoopDecodeExactly) {
  const oracle::LemniscateModel m(kDemo);
  const Trajectory demo = generate_lemniscate_demo(kDemo);
  const auto layout = ObservableLayout::position_velocity(3);
  ScenarioConfig sc = scenario(ScenarioKind::force_noise);
  const EpisodeLog log = run_scenario(m, demo, layout, FeedbackConfig{}, sc, 4);
  const LatentState z0 = m.encode(demo.data.col(0));
  for (std::size_t i = 0; i < log.samples.size(); ++i) {
    const Index n = static_cast<Index>(i) * sc.control_substeps;
    const Vector ref = m.decode(advance(z0, log.control_dt * static_cast<double>(n), m.latent()));
    ASSERT_EQ(log.samples[i].desired_position, ref.head(3)) << i;
  }
  // switching feedback off gives the same trace as a zero gain
  sc.feedback = false;
  const EpisodeLog off = run_scenario(m, demo, layout, FeedbackConfig::from_step_gain(0.05, 0.002), sc, 4);
  EXPECT_EQ(off.samples.back().desired_position, log.samples.back().desired_position);
}

TEST(Scenario, AnomalyStallsTheLatentPhase) {
  const oracle::LemniscateModel m(kDemo);
  const Trajectory demo = generate_lemniscate_demo(kDemo);
  const auto layout = ObservableLayout::position_velocity(3);
  const ScenarioConfig sc = scenario(ScenarioKind::anomaly);
  const auto fb = FeedbackConfig::from_step_gain(5e-2, demo.dt / sc.control_substeps);
  const EpisodeLog with = run_scenario(m, demo, layout, fb, sc, 1);
  ScenarioConfig off = sc;
  off.feedback = false;
  const EpisodeLog without = run_scenario(m, demo, layout, fb, off, 1);
  EXPECT_NEAR(without.phase_advance, without.open_loop_advance, 1e-9);
  EXPECT_LT(std::abs(with.phase_advance), 0.25 * with.open_loop_advance);
  EXPECT_LT(with.recovery_jump, 0.2 * without.recovery_jump);
  bool saw_cut = false;
  for (const auto& s : with.samples) saw_cut = saw_cut || s.control_cut;
  EXPECT_TRUE(saw_cut);
}

TEST(Scenario, ReshapeHalvesExtentsAndKeepsPhase) {
  const oracle::LemniscateModel m(kDemo);
  const Trajectory demo = generate_lemniscate_demo(kDemo);
  const auto layout = ObservableLayout::position_velocity(3);
  for (bool feedback : {false, true}) {
    ScenarioConfig nominal = scenario(ScenarioKind::nominal), reshape = scenario(ScenarioKind::reshape);
    nominal.feedback = reshape.feedback = feedback;
    const auto fb = FeedbackConfig::from_step_gain(1e-3, demo.dt / 25);
    const EpisodeLog a = run_scenario(m, demo, layout, fb, nominal, 2);
    const EpisodeLog b = run_scenario(m, demo, layout, fb, reshape, 2);
    const Vector mean = demo.data.rowwise().mean().head(3);
    Eigen::Vector3d lo_a = Eigen::Vector3d::Constant(1e9), hi_a = -lo_a, lo_b = lo_a, hi_b = hi_a;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      lo_a = lo_a.cwiseMin(a.samples[i].desired_position - mean);
      hi_a = hi_a.cwiseMax(a.samples[i].desired_position - mean);
      lo_b = lo_b.cwiseMin(b.samples[i].desired_position - mean);
      hi_b = hi_b.cwiseMax(b.samples[i].desired_position - mean);
      const double tol = feedback ? 1e-3 : 0.0;
      EXPECT_NEAR(b.samples[i].latent[0], a.samples[i].latent[0], tol);
    }
    for (int c = 0; c < 2; ++c) {
      EXPECT_NEAR(hi_b[c], 0.5 * hi_a[c], 1e-3 * kDemo.amplitude);
      EXPECT_NEAR(lo_b[c], 0.5 * lo_a[c], 1e-3 * kDemo.amplitude);
    }
    EXPECT_LT(b.tracking_rmse, 0.05 * kDemo.amplitude);
  }
}

TEST(Scenario, SlowMotionTracksTheStretchedDemonstration) {
  const oracle::LemniscateModel m(kDemo);
  const Trajectory demo = generate_lemniscate_demo(kDemo);
  const auto layout = ObservableLayout::position_velocity(3);
  const EpisodeLog log = run_scenario(m, demo, layout, FeedbackConfig::from_step_gain(1e-3, 0.002),
                                      scenario(ScenarioKind::slow_motion), 3);
  EXPECT_EQ(log.compared, demo.steps());
  EXPECT_EQ(log.samples.size(), static_cast<std::size_t>(2 * (demo.steps() - 1) + 1));
  EXPECT_LT(log.tracking_rmse, 0.05 * kDemo.amplitude);
}

TEST(Scenario, ForceNoiseSeededAndDivergenceFlagged) {
  const oracle::LemniscateModel m(kDemo);
  const Trajectory demo = generate_lemniscate_demo(kDemo);
  const auto layout = ObservableLayout::position_velocity(3);
  const auto fb = FeedbackConfig::from_step_gain(1e-3, 0.002);
  const ScenarioConfig sc = scenario(ScenarioKind::force_noise);
  const EpisodeLog a = run_scenario(m, demo, layout, fb, sc, 7), b = run_scenario(m, demo, layout, fb, sc, 7);
  const EpisodeLog c = run_scenario(m, demo, layout, fb, sc, 8);
  EXPECT_EQ(a.tracking_rmse, b.tracking_rmse);
  EXPECT_NE(a.tracking_rmse, c.tracking_rmse);
  EXPECT_GT(a.tracking_rmse, run_scenario(m, demo, layout, fb, scenario(ScenarioKind::nominal), 7).tracking_rmse);
  ScenarioConfig wild = sc;
  wild.noise_std = 1e12;
  const EpisodeLog d = run_scenario(m, demo, layout, fb, wild, 7);
  EXPECT_TRUE(d.diverged);
  EXPECT_TRUE(std::isnan(d.tracking_rmse));
}

TEST(Scenario, DmpBaselineRunsEveryKind) {
  const Trajectory demo = generate_lemniscate_demo(kDemo);
  const auto layout = ObservableLayout::position_velocity(3);
  const RhythmicDmp dmp = fit_dmp(position_channels(demo, layout), kTwoPi * kDemo.frequency_hz);
  for (auto kind : {ScenarioKind::nominal, ScenarioKind::anomaly, ScenarioKind::force_noise, ScenarioKind::slow_motion,
                    ScenarioKind::reshape}) {
    const EpisodeLog log = run_dmp_scenario(dmp, demo, layout, scenario(kind), 5);
    EXPECT_FALSE(log.diverged) << to_string(kind);
    EXPECT_TRUE(std::isfinite(log.tracking_rmse)) << to_string(kind);
    EXPECT_EQ(parse_scenario_kind(to_string(kind)), kind);
  }
  EXPECT_LT(run_dmp_scenario(dmp, demo, layout, scenario(ScenarioKind::nominal), 5).tracking_rmse,
            0.05 * kDemo.amplitude);
  EXPECT_THROW(parse_scenario_kind("sideways"), InvalidArgument);
}

TEST(Scenario, RejectsBadConfigurations) {
  const oracle::LemniscateModel m(kDemo);
  const Trajectory demo = generate_lemniscate_demo(kDemo);
  const auto layout = ObservableLayout::position_velocity(3);
  ScenarioConfig sc = scenario(ScenarioKind::anomaly);
  sc.anomaly_start = 18.0;
  EXPECT_THROW(run_scenario(m, demo, layout, FeedbackConfig{}, sc, 1), InvalidArgument);
  sc = scenario(ScenarioKind::slow_motion);
  sc.speed_factor = 0.3;
  EXPECT_THROW(run_scenario(m, demo, layout, FeedbackConfig{}, sc, 1), InvalidArgument);
}
