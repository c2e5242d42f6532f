#pragma once

// Test-side reference implementations. These are deliberately written without
// the library's batched code paths so they can serve as independent oracles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "phaseamp/objective.hpp"

namespace oracle {

using phaseamp::Index;
using phaseamp::Matrix;
using phaseamp::Vector;

/// MLP from explicit (weight, bias) pairs.
inline phaseamp::MlpParams mlp(std::vector<std::pair<Matrix, Vector>> layers) {
  phaseamp::MlpParams m;
  for (auto& [w, b] : layers) m.layers.push_back({std::move(w), std::move(b)});
  return m;
}

/// Two-hidden-layer ReLU network computing the identity on R^2 via a +/- split.
inline phaseamp::MlpParams identity2() {
  Matrix split(4, 2);
  split << 1, 0, -1, 0, 0, 1, 0, -1;
  Matrix merge(2, 4);
  merge << 1, -1, 0, 0, 0, 0, 1, -1;
  return mlp({{split, Vector::Zero(4)}, {Matrix::Identity(4, 4), Vector::Zero(4)}, {merge, Vector::Zero(2)}});
}

/// Exact model of the unit circle rotating at omega: h(x) = atan2(x1, x0) and
/// zeta(phi) = (cos phi, sin phi). Observables (x0, x1); one phase, no amplitudes.
inline phaseamp::ModelParams circle_model(double omega, double dt) {
  phaseamp::ModelParams m;
  m.latent = phaseamp::LatentParams({omega}, {}, dt);
  m.weights.encoder = identity2();  // raw (y0, y1) = (x0, x1)
  // decoder input is (sin phi, cos phi); output must be (cos phi, sin phi)
  phaseamp::MlpParams d = identity2();
  Matrix swap(2, 4);
  swap << 0, 0, 1, -1, 1, -1, 0, 0;
  d.layers.back().weight = swap;
  m.weights.decoder = d;
  return m;
}

/// Scalar model with h(x) = (atan(x), x / 2) and zeta(phi, r) = sin(phi) + r,
/// valid for x > 0 and r > -10. One observable, one phase, one amplitude.
inline phaseamp::ModelParams scalar_stub(double omega, double lambda, double dt) {
  phaseamp::ModelParams m;
  m.latent = phaseamp::LatentParams({omega}, {lambda}, dt);
  Matrix e_out(3, 1);
  e_out << 0, 1, 0.5;
  Vector e_bias(3);
  e_bias << 1, 0, 0;
  m.weights.encoder = mlp({{Matrix::Ones(1, 1), Vector::Zero(1)}, {Matrix::Ones(1, 1), Vector::Zero(1)}, {e_out, e_bias}});
  Matrix d_in(2, 3);
  d_in << 1, 0, 0,  // sin phi (kept positive by the bias below)
      0, 0, 1;      // r
  Vector d_bias(2);
  d_bias << 10, 10;
  Matrix d_out(1, 2);
  d_out << 1, 1;
  m.weights.decoder = mlp({{d_in, d_bias}, {Matrix::Identity(2, 2), Vector::Zero(2)}, {d_out, Vector::Constant(1, -20)}});
  return m;
}

/// Hand evaluation of every loss term for a one-observable model given closed-form h and zeta.
struct HandTerms {
  double rec = 0, enc = 0, dec = 0, lat = 0, rec_diff = 0, dec_diff = 0, total = 0;
};

inline HandTerms hand_loss(const std::vector<double>& x, const std::function<std::pair<double, double>(double)>& h,
                           const std::function<double(double, double)>& zeta, double omega, double lambda, double dt,
                           double gamma, double kappa, const phaseamp::WindowNoise& noise) {
  const std::size_t T = x.size() - 1;
  auto roll = [&](std::pair<double, double> z, double k) {
    return std::pair<double, double>{z.first + omega * k * dt, z.second * std::exp(-lambda * k * dt)};
  };
  const double d = std::exp(-lambda * dt);
  auto c_amp = [&](double k) { return (1 - gamma * d) / (1 - gamma) * std::pow(d, k); };
  std::vector<std::pair<double, double>> hx, z1, z2;
  for (double xi : x) hx.push_back(h(xi));
  const std::pair<double, double> z0{hx[0].first + noise.eps0[0], hx[0].second + noise.eps0[1]};
  for (std::size_t k = 0; k <= T; ++k) {
    auto r = roll(z0, static_cast<double>(k));
    if (k > 0) {
      r.first += noise.eps_f(0, static_cast<Index>(k - 1));
      r.second += noise.eps_f(1, static_cast<Index>(k - 1));
    }
    z1.push_back(r);
    z2.push_back({hx[k].first + noise.eps_h(0, static_cast<Index>(k)), hx[k].second + noise.eps_h(1, static_cast<Index>(k))});
  }
  HandTerms t;
  for (std::size_t k = 0; k <= T; ++k) {
    const double w = (1 - gamma) * std::pow(gamma, static_cast<double>(k));
    t.rec += w * std::abs(x[k] - zeta(z1[k].first, z1[k].second));
    t.dec += w * std::abs(x[k] - zeta(z2[k].first, z2[k].second));
    if (k >= 1) {
      const auto f = roll(z0, static_cast<double>(k));
      t.enc += w * kappa * (std::abs(hx[k].first - f.first) + c_amp(static_cast<double>(k)) * std::abs(hx[k].second - f.second));
      const auto g = roll(z2[k - 1], 1.0);
      t.lat += w * (2 - kappa) *
               (std::abs(hx[k].first - g.first) + c_amp(static_cast<double>(k)) * std::abs(hx[k].second - g.second));
    }
    if (k < T) {
      const double dx = (x[k + 1] - x[k]) / dt;
      t.rec_diff += w * std::abs(dx - (zeta(z1[k + 1].first, z1[k + 1].second) - zeta(z1[k].first, z1[k].second)) / dt);
      t.dec_diff += w * std::abs(dx - (zeta(z2[k + 1].first, z2[k + 1].second) - zeta(z2[k].first, z2[k].second)) / dt);
    }
  }
  t.total = t.rec + t.enc + t.dec + t.lat + std::sqrt(dt) * (t.rec_diff + t.dec_diff);
  return t;
}

struct GradCheckResult {
  int probes = 0;            // coordinates compared (|g| above the floor)
  int failures = 0;          // relative error >= tolerance
  double max_rel_error = 0;  // over compared coordinates
};

/// Central-difference check of one loss term against reverse mode at randomly
/// chosen weight coordinates. term: index into LossTerms::all().
inline GradCheckResult gradient_check(const phaseamp::ModelParams& model, const Matrix& window,
                                      const phaseamp::ObjectiveConfig& cfg, const phaseamp::WindowNoise& noise,
                                      std::size_t term, int probes, phaseamp::Rng& rng, double step = 1e-5,
                                      double tolerance = 1e-4, double floor = 1e-6) {
  auto eval = phaseamp::compute_loss(window, model, cfg, noise);
  const phaseamp::NetworkWeights grad = eval.gradient(eval.terms.all()[term], model.weights);
  // flatten parameter addresses for random access
  std::vector<std::pair<int, Index>> coords;
  int block = 0;
  model.weights.visit([&](const auto& m) {
    for (Index i = 0; i < m.size(); ++i) coords.emplace_back(block, i);
    ++block;
  });
  auto get = [](auto& weights, int b, Index i) -> double& {
    double* out = nullptr;
    int idx = 0;
    weights.visit([&](auto& m) {
      if (idx++ == b) out = &m.data()[i];
    });
    return *out;
  };
  GradCheckResult res;
  int attempts = 0;
  while (res.probes < probes && attempts < 50 * probes) {
    ++attempts;
    const auto [b, i] = coords[rng.below(coords.size())];
    phaseamp::NetworkWeights g = grad;
    const double analytic = get(g, b, i);
    if (std::abs(analytic) <= floor) continue;
    phaseamp::ModelParams plus = model, minus = model;
    get(plus.weights, b, i) += step;
    get(minus.weights, b, i) -= step;
    const auto vals = [&](const phaseamp::ModelParams& m) {
      auto e = phaseamp::compute_loss(window, m, cfg, noise);
      return e.tape->scalar(e.terms.all()[term]);
    };
    const double fd = (vals(plus) - vals(minus)) / (2 * step);
    const double rel = std::abs(analytic - fd) / std::max(std::abs(analytic), std::abs(fd));
    ++res.probes;
    res.max_rel_error = std::max(res.max_rel_error, rel);
    if (!(rel < tolerance)) ++res.failures;
  }
  return res;
}

}  // namespace oracle
