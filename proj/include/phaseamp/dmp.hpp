#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "phaseamp/core.hpp"
#include "phaseamp/dataset.hpp"

namespace phaseamp {

enum class DmpRegression {
  least_squares,      // one regression over the normalised basis
  locally_weighted,   // independent weighted mean per basis function
};

struct DmpConfig {
  Index num_basis = 25;
  double alpha_z = 25.0;      // beta_z = alpha_z / 4
  double width_factor = 2.5;  // von Mises concentration h = width_factor * num_basis
  DmpRegression regression = DmpRegression::least_squares;

  void validate() const {
    require(num_basis >= 1, "dmp: num_basis must be >= 1");
    require(alpha_z > 0.0, "dmp: alpha_z must be > 0");
    require(width_factor > 0.0, "dmp: width_factor must be > 0");
  }
  double beta_z() const { return alpha_z / 4.0; }
  double concentration() const { return width_factor * static_cast<double>(num_basis); }
};

/// Rhythmic movement primitive, one transformation system per channel sharing
/// the canonical phase theta' = Omega:
///   y'' = alpha_z (beta_z (g - y) - y') + a * sum_i psi_i(theta) w_i / sum_i psi_i(theta)
/// with psi_i = exp(h (cos(theta - c_i) - 1)).
struct RhythmicDmp {
  DmpConfig config;
  double omega = 0.0;  // canonical rate, rad/s
  Vector goal;         // per channel
  Matrix weights;      // channels x basis
  double dt = 0.0;     // step of the demonstration it was fitted to

  Index channels() const { return goal.size(); }

  Vector basis(double theta) const {
    const double h = config.concentration();
    Vector psi(config.num_basis);
    for (Index i = 0; i < config.num_basis; ++i) {
      const double c = kTwoPi * static_cast<double>(i) / static_cast<double>(config.num_basis);
      psi[i] = std::exp(h * (std::cos(theta - c) - 1.0));
    }
    return psi;
  }

  /// Forcing term per channel at canonical phase theta, before amplitude scaling.
  Vector forcing(double theta) const {
    const Vector psi = basis(theta);
    return weights * psi / psi.sum();
  }
};

/// Fits goal, then the forcing weights. Derivatives use the differences that the
/// semi-implicit rollout produces exactly (backward first difference, central
/// second difference), so a rollout refitted at the same step returns its weights.
inline RhythmicDmp fit_dmp(const Trajectory& demo, double omega, const DmpConfig& cfg = {}) {
  cfg.validate();
  require(omega > 0.0, "dmp: Omega must be > 0");
  require(demo.dt > 0.0, "dmp: demo dt must be > 0");
  require(demo.steps() >= 3 && demo.duration() >= kTwoPi / omega,
          "dmp: demonstration must be longer than one period");
  RhythmicDmp d;
  d.config = cfg;
  d.omega = omega;
  d.dt = demo.dt;
  // mean taken about the channel minimum so a constant channel maps to itself exactly
  const Vector lo = demo.data.rowwise().minCoeff();
  d.goal = lo + (demo.data.colwise() - lo).rowwise().mean();

  const Index K = demo.steps() - 2;  // interior samples k = 1 .. steps-2
  const double dt = demo.dt;
  Matrix target(demo.dim(), K);
  Matrix phi(K, cfg.num_basis);
  Vector activation = Vector::Zero(cfg.num_basis);
  for (Index j = 0; j < K; ++j) {
    const Index k = j + 1;
    const auto y = demo.data.col(k);
    const Vector v = (y - demo.data.col(k - 1)) / dt;
    const Vector a = (demo.data.col(k + 1) - 2.0 * y + demo.data.col(k - 1)) / (dt * dt);
    target.col(j) = a - cfg.alpha_z * (cfg.beta_z() * (d.goal - y) - v);
    const Vector psi = d.basis(omega * dt * static_cast<double>(k));
    activation += psi;
    phi.row(j) = (psi / psi.sum()).transpose();
  }
  const double peak = activation.maxCoeff();
  for (Index i = 0; i < cfg.num_basis; ++i) {
    require(activation[i] > 1e-8 * peak,
            "dmp: basis function " + std::to_string(i) + " is never activated; use a longer demonstration");
  }

  if (cfg.regression == DmpRegression::least_squares) {
    Eigen::ColPivHouseholderQR<Matrix> qr(phi);
    require(qr.rank() == cfg.num_basis, "dmp: singular forcing regression");
    d.weights = qr.solve(target.transpose()).transpose();
  } else {
    d.weights.resize(demo.dim(), cfg.num_basis);
    for (Index i = 0; i < cfg.num_basis; ++i) {
      double num_w = 0.0;
      Vector num = Vector::Zero(demo.dim());
      for (Index j = 0; j < K; ++j) {
        const double psi = d.basis(omega * dt * static_cast<double>(j + 1))[i];
        num += psi * target.col(j);
        num_w += psi;
      }
      d.weights.col(i) = num / num_w;
    }
  }
  require(d.weights.allFinite(), "dmp: forcing weights are not finite");
  return d;
}

struct DmpModifiers {
  double speed = 1.0;      // scales Omega
  double amplitude = 1.0;  // scales the forcing term
};

struct DmpRollout {
  Matrix position;  // channels x steps
  Matrix velocity;
  Vector theta;     // canonical phase per step
  double dt = 0.0;
};

/// Semi-implicit Euler at `dt` (defaults to the fit step); column 0 is the initial state.
inline DmpRollout rollout_dmp(const RhythmicDmp& d, const Vector& y0, const Vector& v0, Index steps,
                              const DmpModifiers& mod = {}, double theta0 = 0.0, double dt = 0.0) {
  require(steps >= 1, "dmp: steps must be >= 1");
  require(mod.speed > 0.0 && mod.amplitude > 0.0, "dmp: modifiers must be > 0");
  require_shape(y0.size() == d.channels() && v0.size() == d.channels(), "dmp: initial state has the wrong size");
  const double h = dt > 0.0 ? dt : d.dt;
  require(h > 0.0, "dmp: step must be > 0");
  const double rate = d.omega * mod.speed;
  DmpRollout out;
  out.dt = h;
  out.position.resize(d.channels(), steps);
  out.velocity.resize(d.channels(), steps);
  out.theta.resize(steps);
  Vector y = y0, v = v0;
  for (Index k = 0; k < steps; ++k) {
    const double theta = theta0 + rate * h * static_cast<double>(k);
    out.position.col(k) = y;
    out.velocity.col(k) = v;
    out.theta[k] = theta;
    const Vector a = d.config.alpha_z * (d.config.beta_z() * (d.goal - y) - v) + mod.amplitude * d.forcing(theta);
    v += h * a;
    y += h * v;
  }
  return out;
}

}  // namespace phaseamp
