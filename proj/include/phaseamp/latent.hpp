#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "phaseamp/core.hpp"

namespace phaseamp {

/// Characteristic frequencies (one per phase) and exponents (one per amplitude)
/// of the linear phase-amplitude system, plus the discretization step.
///
/// All rates are in rad/s. Exponents are kept sorted ascending.
class LatentParams {
 public:
  LatentParams() = default;

  LatentParams(std::vector<double> omega, std::vector<double> lambda, double dt)
      : omega_(std::move(omega)), lambda_(std::move(lambda)), dt_(dt) {
    require(!omega_.empty(), "LatentParams: at least one phase is required");
    for (double w : omega_) require(std::isfinite(w) && w > 0.0, "LatentParams: omega must be > 0");
    for (double l : lambda_) require(std::isfinite(l) && l > 0.0, "LatentParams: lambda must be > 0");
    require(std::isfinite(dt_) && dt_ > 0.0, "LatentParams: dt must be > 0");
    std::sort(lambda_.begin(), lambda_.end());
  }

  Index num_phases() const { return static_cast<Index>(omega_.size()); }
  Index num_amplitudes() const { return static_cast<Index>(lambda_.size()); }
  Index dim() const { return num_phases() + num_amplitudes(); }

  const std::vector<double>& omega() const { return omega_; }
  const std::vector<double>& lambda() const { return lambda_; }
  double dt() const { return dt_; }

  /// Same rates, different step.
  LatentParams with_dt(double dt) const { return LatentParams(omega_, lambda_, dt); }

  bool operator==(const LatentParams&) const = default;

 private:
  std::vector<double> omega_;
  std::vector<double> lambda_;
  double dt_ = 0.0;
};

/// z = [phi, r]. Phases live on the real line (unwrapped); amplitudes are signed.
struct LatentState {
  Vector phi;
  Vector r;

  Index dim() const { return phi.size() + r.size(); }

  Vector stacked() const {
    Vector z(dim());
    z << phi, r;
    return z;
  }

  static LatentState from_stacked(const Eigen::Ref<const Vector>& z, Index num_phases) {
    require_shape(z.size() >= num_phases, "LatentState: stacked vector shorter than phase count");
    return {z.head(num_phases), z.tail(z.size() - num_phases)};
  }

  bool is_finite() const { return phi.allFinite() && r.allFinite(); }
};

/// Closed-form solution of phi' = omega, r' = -lambda r after an elapsed time.
inline LatentState advance(const LatentState& z, double elapsed, const LatentParams& params) {
  require_shape(z.phi.size() == params.num_phases() && z.r.size() == params.num_amplitudes(),
                "advance: latent state does not match latent params");
  LatentState out = z;
  for (Index i = 0; i < out.phi.size(); ++i) out.phi[i] += params.omega()[i] * elapsed;
  for (Index j = 0; j < out.r.size(); ++j) out.r[j] *= std::exp(-params.lambda()[j] * elapsed);
  return out;
}

/// f(z0, k): the latent state k steps of length dt after z0.
inline LatentState analytic_rollout(const LatentState& z0, Index k, const LatentParams& params) {
  require(k >= 0, "analytic_rollout: k must be nonnegative");
  const double elapsed = static_cast<double>(k) * params.dt();
  require_shape(z0.phi.size() == params.num_phases() && z0.r.size() == params.num_amplitudes(),
                "analytic_rollout: latent state does not match latent params");
  LatentState out = z0;
  for (Index i = 0; i < out.phi.size(); ++i) out.phi[i] = z0.phi[i] + params.omega()[i] * elapsed;
  for (Index j = 0; j < out.r.size(); ++j) out.r[j] = std::exp(-params.lambda()[j] * elapsed) * z0.r[j];
  return out;
}

/// Shifts `phase` by the multiple of 2*pi that brings it closest to `reference`.
inline double align_phase(double phase, double reference) {
  return phase + kTwoPi * std::round((reference - phase) / kTwoPi);
}

inline LatentState align_phases(LatentState z, const LatentState& reference) {
  require_shape(z.phi.size() == reference.phi.size(), "align_phases: phase count mismatch");
  for (Index i = 0; i < z.phi.size(); ++i) z.phi[i] = align_phase(z.phi[i], reference.phi[i]);
  return z;
}

/// f(z0, k, x_k) = f(z0, k) + kappa (h(x_k) - f(z0, k)), with the encoded phases
/// first moved to the 2*pi branch nearest the rollout.
inline LatentState coupled_location(const LatentState& z0, Index k, const LatentState& encoded,
                                    double kappa, const LatentParams& params) {
  require(kappa >= 0.0 && kappa <= 1.0, "coupled_location: kappa must be in [0, 1]");
  const LatentState rolled = analytic_rollout(z0, k, params);
  const LatentState aligned = align_phases(encoded, rolled);
  require_shape(aligned.r.size() == rolled.r.size(), "coupled_location: amplitude count mismatch");
  LatentState out;
  out.phi = rolled.phi + kappa * (aligned.phi - rolled.phi);
  out.r = rolled.r + kappa * (aligned.r - rolled.r);
  return out;
}

/// Integer number of 2*pi turns to add to each element so consecutive jumps lie in (-pi, pi].
inline std::vector<long long> unwrap_turns(std::span<const double> wrapped) {
  std::vector<long long> turns(wrapped.size(), 0);
  for (std::size_t i = 1; i < wrapped.size(); ++i) {
    const double jump = wrapped[i] - wrapped[i - 1];
    // smallest n with jump - 2*pi*n <= pi, i.e. the new jump lands in (-pi, pi]
    const auto n = static_cast<long long>(std::ceil((jump - kPi) / kTwoPi));
    turns[i] = turns[i - 1] - n;
  }
  return turns;
}

inline std::vector<double> unwrap_phase(std::span<const double> wrapped) {
  require(!wrapped.empty(), "unwrap_phase: empty sequence");
  const std::vector<long long> turns = unwrap_turns(wrapped);
  std::vector<double> out(wrapped.size());
  for (std::size_t i = 0; i < wrapped.size(); ++i) {
    out[i] = wrapped[i] + kTwoPi * static_cast<double>(turns[i]);
  }
  return out;
}

/// Per-component discount weights c_k = ((1 - gamma d) / (1 - gamma)) * d^k with
/// d = 1 for phases and exp(-lambda dt) for amplitudes.
inline Vector lambda_discount(Index k, double gamma, const LatentParams& params) {
  require(k >= 0, "lambda_discount: k must be nonnegative");
  require(gamma > 0.0 && gamma < 1.0, "lambda_discount: gamma must be in (0, 1)");
  Vector c = Vector::Ones(params.dim());
  for (Index j = 0; j < params.num_amplitudes(); ++j) {
    const double rate = params.lambda()[j] * params.dt();
    const double d = std::exp(-rate);
    c[params.num_phases() + j] = (1.0 - gamma * d) / (1.0 - gamma) * std::exp(-rate * static_cast<double>(k));
  }
  return c;
}

}  // namespace phaseamp
