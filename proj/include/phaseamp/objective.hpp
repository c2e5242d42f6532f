#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "phaseamp/autodiff.hpp"
#include "phaseamp/core.hpp"
#include "phaseamp/latent.hpp"
#include "phaseamp/neural.hpp"
#include "phaseamp/parallel.hpp"
#include "phaseamp/random.hpp"

namespace phaseamp {

struct ObjectiveConfig {
  double gamma = 0.99;
  double kappa = 0.5;
  double b_f = 1e-5;
  double b_h = 1e-5;
  double b_0 = 1e-5;
  double beta_prior = 0.0;
  Index horizon = 500;  // window length T in steps (windows hold T + 1 samples)

  void validate() const {
    require(gamma > 0.0 && gamma < 1.0, "objective: gamma must be in (0, 1)");
    require(kappa >= 0.0 && kappa <= 1.0, "objective: kappa must be in [0, 1]");
    require(b_f >= 0.0 && b_h >= 0.0 && b_0 >= 0.0, "objective: Laplace scales must be >= 0");
    require(beta_prior >= 0.0, "objective: beta_prior must be >= 0");
    require(beta_prior == 0.0 || b_0 > 0.0, "objective: beta_prior > 0 needs b_0 > 0");
    require(horizon >= 1, "objective: horizon must be >= 1");
  }

  bool operator==(const ObjectiveConfig&) const = default;
};

struct LossBreakdown {
  double l_rec = 0.0;
  double l_enc = 0.0;
  double l_dec = 0.0;
  double l_lat = 0.0;
  double l_rec_diff = 0.0;
  double l_dec_diff = 0.0;
  double prior = 0.0;
  double total = 0.0;

  static constexpr std::array<const char*, 8> kNames{"l_rec", "l_enc", "l_dec", "l_lat",
                                                     "l_rec_diff", "l_dec_diff", "prior", "total"};

  std::array<double, 8> values() const { return {l_rec, l_enc, l_dec, l_lat, l_rec_diff, l_dec_diff, prior, total}; }

  LossBreakdown& operator+=(const LossBreakdown& o) {
    l_rec += o.l_rec;
    l_enc += o.l_enc;
    l_dec += o.l_dec;
    l_lat += o.l_lat;
    l_rec_diff += o.l_rec_diff;
    l_dec_diff += o.l_dec_diff;
    prior += o.prior;
    total += o.total;
    return *this;
  }

  LossBreakdown scaled(double s) const {
    LossBreakdown out;
    out.l_rec = s * l_rec;
    out.l_enc = s * l_enc;
    out.l_dec = s * l_dec;
    out.l_lat = s * l_lat;
    out.l_rec_diff = s * l_rec_diff;
    out.l_dec_diff = s * l_dec_diff;
    out.prior = s * prior;
    out.total = s * total;
    return out;
  }
};

/// Inverse-CDF Laplace draw with location 0 and scale b from u in (-1/2, 1/2).
inline double laplace_sample(double b, double u) {
  require(b >= 0.0, "laplace_sample: scale must be >= 0");
  require(std::abs(u) < 0.5, "laplace_sample: u must lie in the open interval (-1/2, 1/2)");
  if (b == 0.0 || u == 0.0) return 0.0;
  const double s = u > 0.0 ? 1.0 : -1.0;
  return -b * s * std::log1p(-2.0 * std::abs(u));
}

/// All noise consumed by one window's loss. Drawing it up front keeps the loss a
/// deterministic function of the weights (needed for finite-difference checks).
struct WindowNoise {
  Vector eps0;   // M: z_0 = h(x_0) + eps0
  Matrix eps_f;  // M x T: column k-1 perturbs the rollout at step k
  Matrix eps_h;  // M x (T+1): q2 samples

  static WindowNoise zeros(Index latent_dim, Index steps) {
    return {Vector::Zero(latent_dim), Matrix::Zero(latent_dim, steps), Matrix::Zero(latent_dim, steps + 1)};
  }

  /// Fixed draw order: eps0, then eps_f and eps_h column by column.
  static WindowNoise draw(Index latent_dim, Index steps, const ObjectiveConfig& cfg, Rng& rng) {
    WindowNoise n = zeros(latent_dim, steps);
    for (Index i = 0; i < latent_dim; ++i) n.eps0[i] = laplace_sample(cfg.b_h, rng.uniform_centered_open());
    for (Index k = 0; k < steps; ++k) {
      for (Index i = 0; i < latent_dim; ++i) n.eps_f(i, k) = laplace_sample(cfg.b_f, rng.uniform_centered_open());
    }
    for (Index k = 0; k <= steps; ++k) {
      for (Index i = 0; i < latent_dim; ++i) n.eps_h(i, k) = laplace_sample(cfg.b_h, rng.uniform_centered_open());
    }
    return n;
  }
};

/// 2*pi offsets that unwrap each phase row of `z` along its columns.
inline Matrix unwrap_offsets(const Matrix& z, Index num_phases) {
  Matrix offsets = Matrix::Zero(z.rows(), z.cols());
  std::vector<double> row(static_cast<std::size_t>(z.cols()));
  for (Index i = 0; i < num_phases; ++i) {
    for (Index k = 0; k < z.cols(); ++k) row[static_cast<std::size_t>(k)] = z(i, k);
    const std::vector<long long> turns = unwrap_turns(row);
    for (Index k = 0; k < z.cols(); ++k) offsets(i, k) = kTwoPi * static_cast<double>(turns[static_cast<std::size_t>(k)]);
  }
  return offsets;
}

/// Encoder outputs for a window with phases unwrapped along time (first column untouched).
inline Matrix encode_unwrapped(const ModelParams& model, const Matrix& window) {
  Matrix z = encode_batch(model, window);
  return z + unwrap_offsets(z, model.num_phases());
}

/// Per-step rollout factors: column k holds exp(-lambda k dt) for amplitudes and 1 for phases.
inline Matrix rollout_scale(const LatentParams& p, Index steps) {
  Matrix s = Matrix::Ones(p.dim(), steps + 1);
  for (Index j = 0; j < p.num_amplitudes(); ++j) {
    for (Index k = 0; k <= steps; ++k) s(p.num_phases() + j, k) = std::exp(-p.lambda()[j] * p.dt() * static_cast<double>(k));
  }
  return s;
}

/// Per-step rollout offsets: omega k dt for phases, 0 for amplitudes.
inline Matrix rollout_offset(const LatentParams& p, Index steps) {
  Matrix o = Matrix::Zero(p.dim(), steps + 1);
  for (Index i = 0; i < p.num_phases(); ++i) {
    for (Index k = 0; k <= steps; ++k) o(i, k) = p.omega()[i] * p.dt() * static_cast<double>(k);
  }
  return o;
}

/// q1 samples: z_0 = h(x_0) + eps0, z_k = f(z_0, k) + eps_f[k-1]. Columns are k = 0..T.
inline Matrix sample_q1_latents(const Matrix& window, const ModelParams& model, const WindowNoise& noise) {
  const Index steps = window.cols() - 1;
  const Matrix h = encode_batch(model, window.leftCols(1));
  const Vector z0 = h.col(0) + noise.eps0;
  Matrix z = (rollout_scale(model.latent, steps).array().colwise() * z0.array()).matrix() +
             rollout_offset(model.latent, steps);
  z.rightCols(steps) += noise.eps_f;
  return z;
}

/// q2 samples: z'_k = h(x_k) + eps_h[k], phases unwrapped along k.
inline Matrix sample_q2_latents(const Matrix& window, const ModelParams& model, const WindowNoise& noise) {
  return encode_unwrapped(model, window) + noise.eps_h;
}

/// Handles to every term of one window's loss on a tape.
struct LossTerms {
  ad::Var rec, enc, dec, lat, rec_diff, dec_diff, prior, total;

  std::array<ad::Var, 8> all() const { return {rec, enc, dec, lat, rec_diff, dec_diff, prior, total}; }
};

/// Records the full loss of one window (columns x_0..x_T) on `tape`.
inline LossTerms record_window_loss(ad::Tape& tape, const NetworkVars& net, const Matrix& window,
                                    const LatentParams& latent, const ObjectiveConfig& cfg, const WindowNoise& noise) {
  const Index p = latent.num_phases();
  const Index m = latent.dim();
  const Index n = window.rows();
  const Index steps = window.cols() - 1;
  require_shape(steps >= 0, "loss: empty window");
  require_shape(noise.eps0.size() == m && noise.eps_f.rows() == m && noise.eps_f.cols() == steps &&
                    noise.eps_h.rows() == m && noise.eps_h.cols() == steps + 1,
                "loss: noise shape does not match window");
  const double g = cfg.gamma;

  std::vector<double> disc(static_cast<std::size_t>(steps + 1));
  for (Index k = 0; k <= steps; ++k) disc[static_cast<std::size_t>(k)] = (1.0 - g) * std::pow(g, static_cast<double>(k));

  const ad::Var x = tape.constant(window);
  const ad::Var h_wrapped = encode_on_tape(tape, net, x, p);
  const ad::Var h = tape.add_constant(h_wrapped, unwrap_offsets(tape.value(h_wrapped), p));

  // q1: sampled start, analytic rollout, per-step noise
  const ad::Var z0 = tape.add_constant(tape.cols(h, 0, 1), noise.eps0);
  const ad::Var rollout = tape.broadcast_affine(z0, rollout_scale(latent, steps), rollout_offset(latent, steps));
  Matrix q1_noise = Matrix::Zero(m, steps + 1);
  q1_noise.rightCols(steps) = noise.eps_f;
  const ad::Var z1 = tape.add_constant(rollout, q1_noise);

  // q2: independent per-step encodings
  const ad::Var z2 = tape.add_constant(h, noise.eps_h);

  const ad::Var decoded = decode_on_tape(tape, net, tape.hcat(z1, z2), p);
  const ad::Var xhat1 = tape.cols(decoded, 0, steps + 1);
  const ad::Var xhat2 = tape.cols(decoded, steps + 1, steps + 1);

  Matrix w_rec(n, steps + 1);
  for (Index k = 0; k <= steps; ++k) w_rec.col(k).setConstant(disc[static_cast<std::size_t>(k)]);

  LossTerms t;
  t.rec = tape.weighted_abs_sum(tape.sub(x, xhat1), w_rec);
  t.dec = tape.weighted_abs_sum(tape.sub(x, xhat2), w_rec);

  const ad::Var zero = tape.constant(Matrix::Zero(1, 1));
  if (steps >= 1) {
    Matrix w_enc(m, steps), w_lat(m, steps), w_diff(n, steps);
    for (Index k = 1; k <= steps; ++k) {
      const Vector c = lambda_discount(k, g, latent);
      const double dk = disc[static_cast<std::size_t>(k)];
      w_enc.col(k - 1) = dk * cfg.kappa * c;
      w_lat.col(k - 1) = dk * (2.0 - cfg.kappa) * c;
      w_diff.col(k - 1).setConstant(disc[static_cast<std::size_t>(k - 1)]);
    }
    const ad::Var h_tail = tape.cols(h, 1, steps);
    t.enc = tape.weighted_abs_sum(tape.sub(h_tail, tape.cols(rollout, 1, steps)), w_enc);

    Vector one_step_scale(m), one_step_offset = Vector::Zero(m);
    for (Index i = 0; i < m; ++i) {
      one_step_scale[i] = i < p ? 1.0 : std::exp(-latent.lambda()[i - p] * latent.dt());
      if (i < p) one_step_offset[i] = latent.omega()[i] * latent.dt();
    }
    const ad::Var pred = tape.affine_rows(tape.cols(z2, 0, steps), one_step_scale, one_step_offset);
    t.lat = tape.weighted_abs_sum(tape.sub(h_tail, pred), w_lat);

    const ad::Var dx = tape.col_diff(x, latent.dt());
    t.rec_diff = tape.weighted_abs_sum(tape.sub(dx, tape.col_diff(xhat1, latent.dt())), w_diff);
    t.dec_diff = tape.weighted_abs_sum(tape.sub(dx, tape.col_diff(xhat2, latent.dt())), w_diff);
  } else {
    t.enc = t.lat = t.rec_diff = t.dec_diff = zero;
  }

  t.prior = cfg.beta_prior > 0.0 ? tape.weighted_abs_sum(z0, Matrix::Constant(m, 1, 1.0 / cfg.b_0)) : zero;

  const double sdt = std::sqrt(latent.dt());
  t.total = tape.add_scalars({{t.rec, 1.0},
                              {t.enc, 1.0},
                              {t.dec, 1.0},
                              {t.lat, 1.0},
                              {t.rec_diff, sdt},
                              {t.dec_diff, sdt},
                              {t.prior, cfg.beta_prior}});
  return t;
}

inline LossBreakdown read_breakdown(const ad::Tape& tape, const LossTerms& t) {
  LossBreakdown b;
  b.l_rec = tape.scalar(t.rec);
  b.l_enc = tape.scalar(t.enc);
  b.l_dec = tape.scalar(t.dec);
  b.l_lat = tape.scalar(t.lat);
  b.l_rec_diff = tape.scalar(t.rec_diff);
  b.l_dec_diff = tape.scalar(t.dec_diff);
  b.prior = tape.scalar(t.prior);
  b.total = tape.scalar(t.total);
  return b;
}

/// Throws NumericalError naming the first non-finite term.
inline void check_finite(const LossBreakdown& b) {
  const auto v = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NumericalError(std::string("loss term ") + LossBreakdown::kNames[i] + " is not finite");
  }
}

/// One window's loss with its tape kept alive for gradient queries.
struct LossEvaluation {
  LossBreakdown values;
  std::unique_ptr<ad::Tape> tape;
  NetworkVars vars;
  LossTerms terms;

  /// Gradient of one term (default: the total) in weight layout.
  NetworkWeights gradient(const NetworkWeights& shape) { return gradient(terms.total, shape); }

  NetworkWeights gradient(ad::Var term, const NetworkWeights& shape) {
    tape->backward(term);
    return collect_gradients(*tape, vars, shape);
  }
};

inline LossEvaluation compute_loss(const Matrix& window, const ModelParams& model, const ObjectiveConfig& cfg,
                                   const WindowNoise& noise) {
  cfg.validate();
  require_shape(window.rows() == model.observable_dim(), "loss: window observable dimension does not match model");
  LossEvaluation out;
  out.tape = std::make_unique<ad::Tape>();
  out.vars = register_network(*out.tape, model.weights);
  out.terms = record_window_loss(*out.tape, out.vars, window, model.latent, cfg, noise);
  out.values = read_breakdown(*out.tape, out.terms);
  check_finite(out.values);
  return out;
}

inline LossEvaluation compute_loss(const Matrix& window, const ModelParams& model, const ObjectiveConfig& cfg, Rng& rng) {
  return compute_loss(window, model, cfg, WindowNoise::draw(model.latent.dim(), window.cols() - 1, cfg, rng));
}

/// Batch mean of the loss and its gradient. Windows are evaluated in parallel
/// and reduced in window order, so the result does not depend on thread count.
struct BatchResult {
  LossBreakdown loss;
  NetworkWeights gradient;
};

inline BatchResult batch_loss_and_gradient(const std::vector<Matrix>& windows, const std::vector<WindowNoise>& noises,
                                           const ModelParams& model, const ObjectiveConfig& cfg) {
  require(!windows.empty(), "batch: no windows");
  require_shape(windows.size() == noises.size(), "batch: one noise draw per window required");
  std::vector<LossBreakdown> losses(windows.size());
  std::vector<NetworkWeights> grads(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) {
    LossEvaluation ev = compute_loss(windows[i], model, cfg, noises[i]);
    losses[i] = ev.values;
    grads[i] = ev.gradient(model.weights);
  });
  const double inv = 1.0 / static_cast<double>(windows.size());
  BatchResult out{LossBreakdown{}, model.weights.zeros_like()};
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out.loss += losses[i];
    out.gradient.visit_pair(grads[i], [](auto& acc, const auto& g) { acc += g; });
  }
  out.loss = out.loss.scaled(inv);
  out.gradient.visit([inv](auto& m) { m *= inv; });
  return out;
}

}  // namespace phaseamp
