#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "phaseamp/core.hpp"
#include "phaseamp/dataset.hpp"
#include "phaseamp/dmp.hpp"
#include "phaseamp/feedback.hpp"
#include "phaseamp/random.hpp"
#include "phaseamp/simulation.hpp"

namespace phaseamp {

enum class ScenarioKind { nominal, anomaly, force_noise, slow_motion, reshape };

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::nominal: return "nominal";
    case ScenarioKind::anomaly: return "anomaly";
    case ScenarioKind::force_noise: return "force_noise";
    case ScenarioKind::slow_motion: return "slow_motion";
    case ScenarioKind::reshape: return "reshape";
  }
  return "unknown";
}

inline ScenarioKind parse_scenario_kind(const std::string& s) {
  for (auto k : {ScenarioKind::nominal, ScenarioKind::anomaly, ScenarioKind::force_noise, ScenarioKind::slow_motion,
                 ScenarioKind::reshape}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("scenario: unknown kind '" + s + "'");
}

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::nominal;
  double anomaly_start = 5.0;     // s
  double anomaly_duration = 6.0;  // s
  double noise_std = 100.0;       // N, per axis and control step
  double speed_factor = 0.5;
  double shape_factor = 0.5;
  bool feedback = true;
  Index control_substeps = 25;  // control steps per demonstration step
  RobotParams robot;
  double divergence_limit = 1e3;  // m

  double speed() const { return kind == ScenarioKind::slow_motion ? speed_factor : 1.0; }
  double shape() const { return kind == ScenarioKind::reshape ? shape_factor : 1.0; }

  /// Control steps between comparisons with consecutive demonstration samples.
  Index compare_stride() const {
    const double s = static_cast<double>(control_substeps) / speed();
    const auto n = static_cast<Index>(std::llround(s));
    require(n >= 1 && std::abs(s - static_cast<double>(n)) < 1e-9,
            "scenario: control_substeps / speed_factor must be an integer");
    return n;
  }

  void validate(double demo_duration) const {
    require(speed_factor > 0.0 && shape_factor > 0.0, "scenario: factors must be > 0");
    require(noise_std >= 0.0, "scenario: noise_std must be >= 0");
    require(control_substeps >= 1, "scenario: control_substeps must be >= 1");
    require(divergence_limit > 0.0, "scenario: divergence_limit must be > 0");
    robot.validate();
    compare_stride();
    if (kind == ScenarioKind::anomaly) {
      require(anomaly_start >= 0.0 && anomaly_duration > 0.0, "scenario: bad anomaly window");
      require(anomaly_start + anomaly_duration < demo_duration / speed(),
              "scenario: anomaly window must end inside the episode");
    }
  }
};

/// Output-space transformation of a scenario: scaling about the demonstration
/// mean, then velocity channels multiplied by the speed factor.
struct DemoTransform {
  Vector mean;
  double shape = 1.0;
  double speed = 1.0;
  ObservableLayout layout;

  Vector apply(Vector x) const {
    x = mean + shape * (x - mean);
    for (Index v : layout.velocity) x[v] *= speed;
    return x;
  }
  Vector invert(Vector x) const {
    for (Index v : layout.velocity) x[v] /= speed;
    return mean + (x - mean) / shape;
  }
};

struct EpisodeSample {
  double time = 0.0;
  bool control_cut = false;
  Vector desired_position, desired_velocity, position, velocity, latent;
};

struct EpisodeLog {
  std::string method;
  ScenarioKind kind = ScenarioKind::nominal;
  std::uint64_t seed = 0;
  double control_dt = 0.0;
  std::vector<EpisodeSample> samples;  // one per demonstration step of episode time

  double tracking_rmse = std::numeric_limits<double>::quiet_NaN();  // positions vs transformed demo
  Index compared = 0;
  bool diverged = false;
  double diverged_at = std::numeric_limits<double>::quiet_NaN();

  // anomaly only
  double recovery_jump = std::numeric_limits<double>::quiet_NaN();
  double phase_advance = std::numeric_limits<double>::quiet_NaN();  // first latent phase over the cut window
  double open_loop_advance = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline Vector gather(const Vector& x, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = x[rows[i]];
  return out;
}

/// Observable vector of a robot state under the layout.
inline Vector observe_robot(const PointRobotState& s, const ObservableLayout& layout, Index dim) {
  Vector x = Vector::Zero(dim);
  for (std::size_t i = 0; i < layout.position.size(); ++i) {
    x[layout.position[i]] = s.position[static_cast<Index>(i)];
    if (layout.has_velocity()) x[layout.velocity[i]] = s.velocity[static_cast<Index>(i)];
  }
  return x;
}

/// Same rates as the wrapped model with every omega multiplied by `speed`.
template <LatentModel M>
class SpeedAdjusted {
 public:
  SpeedAdjusted(const M& m, double speed) : m_(m) {
    std::vector<double> w = m.latent().omega();
    for (double& v : w) v *= speed;
    p_ = LatentParams(std::move(w), m.latent().lambda(), m.latent().dt());
  }
  const LatentParams& latent() const { return p_; }
  LatentState encode(const Vector& x) const { return m_.encode(x); }
  Vector decode(const LatentState& z) const { return m_.decode(z); }
  Matrix decode_batch(const Matrix& z) const { return m_.decode_batch(z); }

 private:
  const M& m_;
  LatentParams p_;
};

template <LatentModel M>
class ProposedGenerator {
 public:
  ProposedGenerator(const M& model, const FeedbackConfig& fb, bool feedback, const DemoTransform& tf,
                    const ObservableLayout& layout, double control_dt)
      : model_(model, tf.speed), fb_(feedback ? fb : FeedbackConfig{}), tf_(tf), layout_(layout), dt_(control_dt) {}

  void start(const Vector& x0) { tracker_.emplace(model_.encode(tf_.invert(x0)), dt_); }

  DesiredTarget target() {
    const Vector out = tf_.apply(model_.decode(tracker_->current(model_)));
    DesiredTarget t = split_output(out, layout_, previous_, dt_);
    previous_ = t.position;
    return t;
  }

  void observe(const Vector& x) { tracker_->step(tf_.invert(x), model_, fb_); }

  Vector latent() const { return tracker_->current(model_).stacked(); }
  double phase() const { return tracker_->current(model_).phi[0]; }
  double phase_rate() const { return model_.latent().omega()[0]; }

 private:
  SpeedAdjusted<M> model_;
  FeedbackConfig fb_;
  DemoTransform tf_;
  ObservableLayout layout_;
  double dt_;
  std::optional<LatentTracker> tracker_;
  std::optional<Vector> previous_;
};

/// DMP targets are generated at the DMP's own step and linearly interpolated
/// to the control rate.
class DmpGenerator {
 public:
  DmpGenerator(const RhythmicDmp& dmp, const DemoTransform& tf, Index substeps, Index control_steps)
      : dmp_(dmp), tf_(tf), substeps_(substeps), steps_(control_steps / substeps + 2) {}

  void start(const PointRobotState& s) {
    rollout_ = rollout_dmp(dmp_, s.position, s.velocity, steps_, {tf_.speed, tf_.shape});
    n_ = 0;
  }

  DesiredTarget target() const {
    const Index j = n_ / substeps_;
    const double f = static_cast<double>(n_ % substeps_) / static_cast<double>(substeps_);
    DesiredTarget t;
    t.position = (1.0 - f) * rollout_.position.col(j) + f * rollout_.position.col(j + 1);
    t.velocity = (1.0 - f) * rollout_.velocity.col(j) + f * rollout_.velocity.col(j + 1);
    return t;
  }

  void observe(const Vector&) { ++n_; }

  Vector latent() const {
    const Index j = n_ / substeps_;
    const double f = static_cast<double>(n_ % substeps_) / static_cast<double>(substeps_);
    return Vector::Constant(1, (1.0 - f) * rollout_.theta[j] + f * rollout_.theta[j + 1]);
  }
  double phase() const { return latent()[0]; }
  double phase_rate() const { return dmp_.omega * tf_.speed; }

 private:
  const RhythmicDmp& dmp_;
  DemoTransform tf_;
  Index substeps_;
  Index steps_;
  DmpRollout rollout_;
  Index n_ = 0;
};

inline DemoTransform make_transform(const Trajectory& demo, const ObservableLayout& layout, const ScenarioConfig& sc) {
  return {demo.data.rowwise().mean(), sc.shape(), sc.speed(), layout};
}

/// Shared closed loop: generator targets, PD robot, scenario disturbances.
template <class Gen, class Start>
EpisodeLog run_episode(Gen& gen, Start&& start, const Trajectory& demo, const ObservableLayout& layout,
                       const ScenarioConfig& sc, std::uint64_t seed, std::string method) {
  sc.validate(demo.duration());
  layout.validate(demo.dim());
  require(!layout.position.empty(), "scenario: layout has no position channels");
  require(demo.steps() >= 2, "scenario: demonstration needs at least two samples");
  const DemoTransform tf = make_transform(demo, layout, sc);
  const Index stride = sc.compare_stride();
  const double cdt = demo.dt / static_cast<double>(sc.control_substeps);
  const Index total = (demo.steps() - 1) * stride + 1;

  EpisodeLog log;
  log.method = std::move(method);
  log.kind = sc.kind;
  log.seed = seed;
  log.control_dt = cdt;

  // Robot starts on the transformed demonstration.
  const Vector ref0 = tf.apply(demo.data.col(0));
  PointRobotState robot;
  robot.position = gather(ref0, layout.position);
  if (layout.has_velocity()) {
    robot.velocity = gather(ref0, layout.velocity);
  } else {
    robot.velocity = (gather(tf.apply(demo.data.col(1)), layout.position) - robot.position) / (demo.dt / tf.speed);
  }
  start(gen, robot, observe_robot(robot, layout, demo.dim()));

  Rng noise = Rng(seed).split(0x4e01);
  const bool anomaly = sc.kind == ScenarioKind::anomaly;
  const Index cut_begin = anomaly ? static_cast<Index>(std::llround(sc.anomaly_start / cdt)) : -1;
  const Index cut_end = anomaly ? static_cast<Index>(std::llround((sc.anomaly_start + sc.anomaly_duration) / cdt)) : -1;
  double sq = 0.0;
  Vector last_cmd;
  const Vector zero = Vector::Zero(robot.position.size());
  for (Index n = 0; n < total; ++n) {
    const bool cut = anomaly && n >= cut_begin && n < cut_end;
    if (anomaly && n == cut_begin) log.phase_advance = -gen.phase();
    if (anomaly && n == cut_end) log.phase_advance += gen.phase();
    const DesiredTarget target = gen.target();
    const Vector cmd = cut ? robot.position : target.position;
    if (anomaly && n == cut_end) log.recovery_jump = (cmd - last_cmd).norm();
    last_cmd = cmd;

    if (n % sc.control_substeps == 0) {
      log.samples.push_back({static_cast<double>(n) * cdt, cut, target.position, target.velocity, robot.position,
                             robot.velocity, gen.latent()});
    }
    if (n % stride == 0) {
      const Vector ref = gather(tf.apply(demo.data.col(n / stride)), layout.position);
      sq += (robot.position - ref).squaredNorm();
      ++log.compared;
    }
    if (n + 1 == total) break;

    Vector force = zero;
    if (sc.kind == ScenarioKind::force_noise) {
      for (Index i = 0; i < force.size(); ++i) force[i] = sc.noise_std * noise.normal();
    }
    if (cut) {
      robot.velocity.setZero();
    } else {
      robot = step_robot(robot, sc.robot, target.position, target.velocity, force, cdt);
    }
    if (!robot.is_finite() || robot.position.cwiseAbs().maxCoeff() > sc.divergence_limit) {
      log.diverged = true;
      log.diverged_at = static_cast<double>(n + 1) * cdt;
      break;
    }
    gen.observe(observe_robot(robot, layout, demo.dim()));
  }
  if (anomaly) log.open_loop_advance = gen.phase_rate() * sc.anomaly_duration;
  if (!log.diverged) log.tracking_rmse = std::sqrt(sq / static_cast<double>(log.compared));
  return log;
}

}  // namespace detail

/// Closed loop of the learned latent system, interactive feedback and the PD robot.
template <LatentModel M>
EpisodeLog run_scenario(const M& model, const Trajectory& demo, const ObservableLayout& layout,
                        const FeedbackConfig& fb, const ScenarioConfig& sc, std::uint64_t seed) {
  require_shape(model.latent().dim() >= 1, "scenario: empty latent");
  require(std::abs(model.latent().dt() - demo.dt) <= 1e-9, "scenario: model dt differs from the demonstration dt");
  fb.validate(model.latent());
  const DemoTransform tf = detail::make_transform(demo, layout, sc);
  detail::ProposedGenerator<M> gen(model, fb, sc.feedback, tf, layout,
                                   demo.dt / static_cast<double>(sc.control_substeps));
  auto start = [](auto& g, const PointRobotState&, const Vector& x0) { g.start(x0); };
  return detail::run_episode(gen, start, demo, layout, sc, seed, sc.feedback ? "proposed" : "proposed_open_loop");
}

/// The same episode driven by a rhythmic DMP fitted to the demonstration positions.
inline EpisodeLog run_dmp_scenario(const RhythmicDmp& dmp, const Trajectory& demo, const ObservableLayout& layout,
                                   const ScenarioConfig& sc, std::uint64_t seed) {
  require_shape(dmp.channels() == static_cast<Index>(layout.position.size()),
                "scenario: DMP channels differ from the layout positions");
  require(std::abs(dmp.dt - demo.dt) <= 1e-9, "scenario: DMP step differs from the demonstration dt");
  const DemoTransform tf = detail::make_transform(demo, layout, sc);
  const Index total = (demo.steps() - 1) * sc.compare_stride() + 1;
  detail::DmpGenerator gen(dmp, tf, sc.control_substeps, total);
  auto start = [](auto& g, const PointRobotState& s, const Vector&) { g.start(s); };
  return detail::run_episode(gen, start, demo, layout, sc, seed, "dmp");
}

/// Position rows of a demonstration, the DMP's training signal.
inline Trajectory position_channels(const Trajectory& demo, const ObservableLayout& layout) {
  Trajectory t;
  t.dt = demo.dt;
  t.t0 = demo.t0;
  t.data.resize(static_cast<Index>(layout.position.size()), demo.steps());
  for (std::size_t i = 0; i < layout.position.size(); ++i) t.data.row(static_cast<Index>(i)) = demo.data.row(layout.position[i]);
  return t;
}

/// Open-loop DMP prediction in observable space from x0, the baseline
/// counterpart of predict_rollout. The canonical phase starts at theta0.
/// Rows outside the layout are held at their x0 value.
inline Matrix dmp_prediction(const RhythmicDmp& dmp, const ObservableLayout& layout, const Vector& x0, Index steps,
                             double theta0 = 0.0) {
  require_shape(dmp.channels() == static_cast<Index>(layout.position.size()),
                "dmp prediction: DMP channels differ from the layout positions");
  layout.validate(x0.size());
  const Vector y0 = detail::gather(x0, layout.position);
  const Vector v0 = layout.has_velocity() ? detail::gather(x0, layout.velocity) : Vector::Zero(y0.size());
  const DmpRollout r = rollout_dmp(dmp, y0, v0, steps, {}, theta0);
  Matrix out = x0.replicate(1, steps);
  for (std::size_t i = 0; i < layout.position.size(); ++i) {
    out.row(layout.position[i]) = r.position.row(static_cast<Index>(i));
    if (layout.has_velocity()) out.row(layout.velocity[i]) = r.velocity.row(static_cast<Index>(i));
  }
  return out;
}

inline void write_episode_csv(std::ostream& os, const EpisodeLog& log) {
  require(!log.samples.empty(), "episode: nothing to write");
  const auto& s0 = log.samples.front();
  os << "t,control_cut";
  auto header = [&](const char* name, Index n) {
    for (Index i = 0; i < n; ++i) os << ',' << name << i;
  };
  header("desired_p", s0.desired_position.size());
  header("desired_v", s0.desired_velocity.size());
  header("actual_p", s0.position.size());
  header("actual_v", s0.velocity.size());
  header("latent", s0.latent.size());
  os << '\n';
  for (const auto& s : log.samples) {
    os << format_double(s.time) << ',' << (s.control_cut ? 1 : 0);
    for (const Vector* v : {&s.desired_position, &s.desired_velocity, &s.position, &s.velocity, &s.latent}) {
      for (Index i = 0; i < v->size(); ++i) os << ',' << format_double((*v)[i]);
    }
    os << '\n';
  }
}

}  // namespace phaseamp
