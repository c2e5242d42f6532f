#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "phaseamp/core.hpp"
#include "phaseamp/dataset.hpp"
#include "phaseamp/latent.hpp"
#include "phaseamp/preprocess.hpp"
#include "phaseamp/random.hpp"

namespace phaseamp {

// ---- planar limit cycle ---------------------------------------------------

struct LimitCycleParams {
  double alpha = 1.0;  // squared cycle radius
  double omega = 2.0;  // rotation rate, rad/s

  void validate() const {
    require(std::isfinite(alpha) && alpha > 0.0, "limit cycle: alpha must be > 0");
    require(std::isfinite(omega) && omega > 0.0, "limit cycle: omega must be > 0");
  }
  double radius() const { return std::sqrt(alpha); }
  /// Isostable exponent of the analytic reduction.
  double lambda() const { return 2.0 * alpha; }
};

/// x' = [[0, -w], [w, 0]] x - (|x|^2 - alpha) x
inline Eigen::Vector2d limit_cycle_field(const Eigen::Vector2d& x, const LimitCycleParams& p) {
  const double radial = x.squaredNorm() - p.alpha;
  return {-p.omega * x.y() - radial * x.x(), p.omega * x.x() - radial * x.y()};
}

/// One RK4 step of length dt, split into substeps far from the cycle where the
/// cubic term makes the field stiff.
inline Eigen::Vector2d limit_cycle_step(const Eigen::Vector2d& x, double dt, const LimitCycleParams& p) {
  const double stiffness = 3.0 * std::max(x.squaredNorm(), p.alpha) + p.omega;
  const int n = std::max(1, static_cast<int>(std::ceil(stiffness * dt / 0.05)));
  const double h = dt / n;
  Eigen::Vector2d y = x;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d k1 = limit_cycle_field(y, p);
    const Eigen::Vector2d k2 = limit_cycle_field(y + 0.5 * h * k1, p);
    const Eigen::Vector2d k3 = limit_cycle_field(y + 0.5 * h * k2, p);
    const Eigen::Vector2d k4 = limit_cycle_field(y + h * k3, p);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

/// Closed-form phase-amplitude coordinates of the cycle (exponent 2 alpha):
/// phi = atan2(x2, x1), r = (|x|^2 - alpha) / |x|^2.
inline LatentState limit_cycle_oracle(const Eigen::Vector2d& x, const LimitCycleParams& p) {
  const double s = x.squaredNorm();
  require(s > 0.0, "limit cycle oracle: the origin has no phase");
  LatentState z;
  z.phi = Vector::Constant(1, std::atan2(x.y(), x.x()));
  z.r = Vector::Constant(1, (s - p.alpha) / s);
  return z;
}

/// Phase rate 2 and exponent 2 alpha, the reduction the oracle realises.
inline LatentParams limit_cycle_latent(const LimitCycleParams& p, double dt) {
  return LatentParams({p.omega}, {p.lambda()}, dt);
}

inline Trajectory integrate_limit_cycle(const Eigen::Vector2d& x0, Index steps, double dt, const LimitCycleParams& p) {
  require(steps >= 1, "limit cycle: steps must be >= 1");
  Trajectory t;
  t.dt = dt;
  t.data.resize(2, steps);
  Eigen::Vector2d x = x0;
  for (Index k = 0; k < steps; ++k) {
    t.data.col(k) = x;
    if (k + 1 < steps) x = limit_cycle_step(x, dt, p);
  }
  return t;
}

/// Start point: a uniform cycle phase pushed along the outward normal by a
/// Gaussian offset of scale sqrt(alpha); offsets reaching the origin are redrawn.
inline Eigen::Vector2d sample_limit_cycle_start(const LimitCycleParams& p, Rng& rng) {
  const double theta = rng.uniform(-kPi, kPi);
  double rho = 0.0;
  do {
    rho = p.radius() + rng.normal(0.0, p.radius());
  } while (rho <= 0.0);
  return {rho * std::cos(theta), rho * std::sin(theta)};
}

struct LimitCycleDataConfig {
  double dt = kPi / 200.0;  // 15.7 ms; 100 steps at omega = 2 span exactly half a cycle
  Index steps_per_trajectory = 100;
};

/// Trajectories of `steps_per_trajectory` samples until `total_steps` are
/// collected; the last one is cut short if needed.
inline std::vector<Trajectory> generate_limit_cycle_dataset(const LimitCycleParams& p, Index total_steps,
                                                            std::uint64_t seed,
                                                            const LimitCycleDataConfig& cfg = {}) {
  p.validate();
  require(total_steps > 0, "limit cycle dataset: total_steps must be > 0");
  require(cfg.dt > 0.0 && cfg.steps_per_trajectory >= 1, "limit cycle dataset: bad sampling config");
  Rng rng(seed);
  std::vector<Trajectory> out;
  for (Index collected = 0; collected < total_steps;) {
    const Index n = std::min(cfg.steps_per_trajectory, total_steps - collected);
    out.push_back(integrate_limit_cycle(sample_limit_cycle_start(p, rng), n, cfg.dt, p));
    collected += n;
  }
  return out;
}

// ---- lemniscate demonstration -------------------------------------------

struct LemniscateConfig {
  double amplitude = 0.2;  // m
  double frequency_hz = 0.2;
  double duration_s = 20.0;
  double dt = 0.05;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
};

/// Gerono lemniscate p = c + (A cos th, A/2 sin 2 th, 0), th = 2 pi f t, sampled
/// for round(duration / dt) steps. Rows: position (3) then analytic velocity (3).
inline Trajectory generate_lemniscate_demo(const LemniscateConfig& c = {}) {
  require(c.amplitude > 0.0 && c.frequency_hz > 0.0 && c.duration_s > 0.0 && c.dt > 0.0,
          "lemniscate: arguments must be positive");
  const auto steps = static_cast<Index>(std::llround(c.duration_s / c.dt));
  require(steps >= 1, "lemniscate: duration shorter than one step");
  const double w = kTwoPi * c.frequency_hz;
  Trajectory t;
  t.dt = c.dt;
  t.data.resize(6, steps);
  for (Index k = 0; k < steps; ++k) {
    const double th = w * c.dt * static_cast<double>(k);
    t.data.col(k) << c.center.x() + c.amplitude * std::cos(th), c.center.y() + 0.5 * c.amplitude * std::sin(2.0 * th),
        c.center.z(), -c.amplitude * w * std::sin(th), c.amplitude * w * std::cos(2.0 * th), 0.0;
  }
  return t;
}

// ---- two-frequency torus signal ---------------------------------------------

/// Synthetic stand-in for a conducted baton: head and tail points of a rod
/// driven by a slow sweep and a three-beat overtone.
struct TorusSignalConfig {
  double f0_hz = 0.17;
  double f1_hz = 0.51;
  double duration_s = 24.16;
  double rate_hz = 360.0;
  double noise_std = 1e-3;  // m, added to positions before preprocessing
  double target_hz = 50.0;
  double cutoff_hz = 5.0;
};

/// Raw samples at rate_hz. Rows: head (3), tail (3), head velocity (3), tail velocity (3).
inline Trajectory generate_torus_raw(const TorusSignalConfig& c, std::uint64_t seed) {
  require(c.f0_hz > 0.0 && c.f1_hz > 0.0 && c.duration_s > 0.0 && c.rate_hz > 0.0 && c.noise_std >= 0.0,
          "torus signal: bad configuration");
  const double dt = 1.0 / c.rate_hz;
  const auto steps = static_cast<Index>(std::llround(c.duration_s * c.rate_hz)) + 1;
  const double w0 = kTwoPi * c.f0_hz, w1 = kTwoPi * c.f1_hz;
  const double a0 = 0.25, a1 = 0.08, b1 = 0.05, tail = 0.35, phase1 = 0.7;
  Rng rng(seed);
  Trajectory t;
  t.dt = dt;
  t.data.resize(12, steps);
  for (Index k = 0; k < steps; ++k) {
    const double s = dt * static_cast<double>(k);
    const double t0 = w0 * s, t1 = w1 * s + phase1;
    const Eigen::Vector3d head(a0 * std::cos(t0) + a1 * std::cos(t1), a0 * std::sin(t0) - a1 * std::sin(t1),
                               0.3 + b1 * std::sin(t1));
    const Eigen::Vector3d head_v(-a0 * w0 * std::sin(t0) - a1 * w1 * std::sin(t1),
                                 a0 * w0 * std::cos(t0) - a1 * w1 * std::cos(t1), b1 * w1 * std::cos(t1));
    // tail follows a damped copy of the head motion, offset below it
    const Eigen::Vector3d tail_p(tail * head.x(), tail * head.y(), 0.3 * tail * head.z() - 0.1);
    const Eigen::Vector3d tail_v(tail * head_v.x(), tail * head_v.y(), 0.3 * tail * head_v.z());
    t.data.col(k) << head, tail_p, head_v, tail_v;
    for (Index r = 0; r < 6; ++r) t.data(r, k) += c.noise_std * rng.normal();
  }
  return t;
}

/// Raw signal filtered and decimated to the target rate with velocities rebuilt.
inline Trajectory generate_torus_signal(const TorusSignalConfig& c, std::uint64_t seed) {
  return preprocess(generate_torus_raw(c, seed), c.target_hz, c.cutoff_hz, ObservableLayout::position_velocity(6));
}

// ---- point robot ------------------------------------------------------------

struct RobotParams {
  double mass = 1.0;  // kg
  double kp = 400.0;  // N/m
  double kd = 40.0;   // N s/m

  void validate() const {
    require(mass > 0.0, "robot: mass must be > 0");
    require(kp >= 0.0 && kd >= 0.0, "robot: gains must be >= 0");
  }
};

struct PointRobotState {
  Vector position;
  Vector velocity;

  bool is_finite() const { return position.allFinite() && velocity.allFinite(); }
};

/// PD servo plus external force, semi-implicit Euler.
inline PointRobotState step_robot(const PointRobotState& s, const RobotParams& p, const Vector& desired_position,
                                  const Vector& desired_velocity, const Vector& force, double dt) {
  require(dt > 0.0, "robot: dt must be > 0");
  require_shape(s.position.size() == s.velocity.size() && desired_position.size() == s.position.size() &&
                    desired_velocity.size() == s.position.size() && force.size() == s.position.size(),
                "robot: dimension mismatch");
  const Vector acc =
      (p.kp * (desired_position - s.position) + p.kd * (desired_velocity - s.velocity) + force) / p.mass;
  PointRobotState out;
  out.velocity = s.velocity + dt * acc;
  out.position = s.position + dt * out.velocity;
  return out;
}

}  // namespace phaseamp
