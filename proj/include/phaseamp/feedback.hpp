#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "phaseamp/core.hpp"
#include "phaseamp/dataset.hpp"
#include "phaseamp/latent.hpp"
#include "phaseamp/training.hpp"

namespace phaseamp {

/// Latent-side coupling w = g (.) dz. `gain` is a rate in 1/s; table values
/// quoted per control step convert with from_step_gain.
struct FeedbackConfig {
  double gain = 0.0;
  bool characteristic_scaling = false;  // g_vec = (g / omega_0) [omega, lambda]
  std::vector<double> phi_ff;           // per-phase offset added to the phase error; empty means zero

  static FeedbackConfig from_step_gain(double gain_per_step, double control_dt, bool scaling = false,
                                       std::vector<double> phi_ff = {}) {
    require(control_dt > 0.0, "feedback: control period must be > 0");
    return {gain_per_step / control_dt, scaling, std::move(phi_ff)};
  }

  void validate(const LatentParams& p) const {
    require(std::isfinite(gain) && gain >= 0.0, "feedback: gain must be >= 0");
    require_shape(phi_ff.empty() || static_cast<Index>(phi_ff.size()) == p.num_phases(),
                  "feedback: phi_ff needs one value per phase");
    for (double v : phi_ff) require(std::isfinite(v), "feedback: phi_ff must be finite");
  }

  /// Per-component gain vector of length M.
  Vector gains(const LatentParams& p) const {
    validate(p);
    if (!characteristic_scaling) return Vector::Constant(p.dim(), gain);
    const double w0 = *std::min_element(p.omega().begin(), p.omega().end());
    Vector g(p.dim());
    for (Index i = 0; i < p.num_phases(); ++i) g[i] = gain / w0 * p.omega()[i];
    for (Index j = 0; j < p.num_amplitudes(); ++j) g[p.num_phases() + j] = gain / w0 * p.lambda()[j];
    return g;
  }

  double offset(Index phase) const { return phi_ff.empty() ? 0.0 : phi_ff[static_cast<std::size_t>(phase)]; }
};

/// dz = h(x) - z with phase rows wrapped to (-pi, pi] after adding phi_ff.
inline Vector latent_error(const LatentState& z, const LatentState& encoded, const FeedbackConfig& cfg) {
  require_shape(z.phi.size() == encoded.phi.size() && z.r.size() == encoded.r.size(),
                "feedback: encoder output does not match the latent state");
  Vector dz(z.dim());
  for (Index i = 0; i < z.phi.size(); ++i) dz[i] = wrap_angle(encoded.phi[i] - z.phi[i] + cfg.offset(i));
  dz.tail(z.r.size()) = encoded.r - z.r;
  return dz;
}

/// One control period: closed-form advance of the free dynamics followed by an
/// explicit Euler correction g_vec (.) dz dt, with dz taken at the start of the step.
template <LatentModel M>
LatentState latent_feedback_step(const LatentState& z, const Vector& x, const M& model, const FeedbackConfig& cfg,
                                 double dt) {
  require(dt > 0.0, "feedback: dt must be > 0");
  const LatentParams& p = model.latent();
  const Vector g = cfg.gains(p);
  LatentState out = advance(z, dt, p);
  if (g.isZero(0.0)) return out;
  const Vector w = g.cwiseProduct(latent_error(z, model.encode(x), cfg)) * dt;
  out.phi += w.head(p.num_phases());
  out.r += w.tail(p.num_amplitudes());
  return out;
}

/// Latent state kept as (anchor, steps since anchor) so that an uncoupled run is
/// the exact closed-form solution rather than a sum of per-step increments.
class LatentTracker {
 public:
  LatentTracker(LatentState z0, double dt) : anchor_(std::move(z0)), dt_(dt) {
    require(dt > 0.0, "feedback: dt must be > 0");
  }

  template <LatentModel M>
  LatentState current(const M& model) const {
    return steps_ == 0 ? anchor_ : advance(anchor_, dt_ * static_cast<double>(steps_), model.latent());
  }

  template <LatentModel M>
  void step(const Vector& x, const M& model, const FeedbackConfig& cfg) {
    if (cfg.gains(model.latent()).isZero(0.0)) {
      ++steps_;
      return;
    }
    anchor_ = latent_feedback_step(current(model), x, model, cfg, dt_);
    steps_ = 0;
  }

 private:
  LatentState anchor_;
  Index steps_ = 0;
  double dt_;
};

struct DesiredTarget {
  Vector output;    // full decoded observable
  Vector position;  // per layout.position
  Vector velocity;  // per layout.velocity, or a finite difference of positions
};

/// Splits a decoded observable per the layout. Without velocity channels the
/// velocity target is (position - previous_position) / dt, or zero when no
/// previous position is given.
inline DesiredTarget split_output(Vector output, const ObservableLayout& layout,
                                  const std::optional<Vector>& previous_position = std::nullopt, double dt = 0.0) {
  layout.validate(output.size());
  DesiredTarget t;
  const auto n = static_cast<Index>(layout.position.size());
  t.position.resize(n);
  t.velocity = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) t.position[i] = output[layout.position[static_cast<std::size_t>(i)]];
  if (layout.has_velocity()) {
    for (Index i = 0; i < n; ++i) t.velocity[i] = output[layout.velocity[static_cast<std::size_t>(i)]];
  } else if (previous_position) {
    require_shape(previous_position->size() == n, "desired_output: previous position has the wrong size");
    require(dt > 0.0, "desired_output: dt must be > 0 for the finite-difference velocity");
    t.velocity = (t.position - *previous_position) / dt;
  }
  t.output = std::move(output);
  return t;
}

template <LatentModel M>
DesiredTarget desired_output(const LatentState& z, const M& model, const ObservableLayout& layout,
                             const std::optional<Vector>& previous_position = std::nullopt, double dt = 0.0) {
  return split_output(model.decode(z), layout, previous_position, dt);
}

}  // namespace phaseamp
