#pragma once

#include <cmath>
#include <cstdint>

#include "phaseamp/core.hpp"
#include "phaseamp/neural.hpp"

namespace phaseamp {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "adam: learning rate must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam: betas must be in [0, 1)");
    require(eps > 0.0, "adam: eps must be > 0");
  }

  bool operator==(const AdamConfig&) const = default;
};

/// First and second moment estimates plus the step counter.
struct AdamState {
  NetworkWeights m;
  NetworkWeights v;
  std::int64_t step = 0;

  static AdamState zeros_like(const NetworkWeights& w) { return {w.zeros_like(), w.zeros_like(), 0}; }

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update applied in place. A zero gradient on a fresh
/// state leaves the parameters untouched.
inline void adam_step(NetworkWeights& params, const NetworkWeights& grad, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const MlpParams* g_nets[2] = {&grad.encoder, &grad.decoder};
  MlpParams* p_nets[2] = {&params.encoder, &params.decoder};
  MlpParams* m_nets[2] = {&state.m.encoder, &state.m.decoder};
  MlpParams* v_nets[2] = {&state.v.encoder, &state.v.decoder};
  auto update = [&](Matrix& p, const Matrix& g, Matrix& m, Matrix& v) {
    require_shape(p.rows() == g.rows() && p.cols() == g.cols(), "adam: gradient shape mismatch");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  };
  auto update_vec = [&](Vector& p, const Vector& g, Vector& m, Vector& v) {
    require_shape(p.size() == g.size(), "adam: gradient shape mismatch");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  };
  for (int n = 0; n < 2; ++n) {
    require_shape(p_nets[n]->layers.size() == g_nets[n]->layers.size(), "adam: layer count mismatch");
    for (std::size_t l = 0; l < p_nets[n]->layers.size(); ++l) {
      update(p_nets[n]->layers[l].weight, g_nets[n]->layers[l].weight, m_nets[n]->layers[l].weight,
             v_nets[n]->layers[l].weight);
      update_vec(p_nets[n]->layers[l].bias, g_nets[n]->layers[l].bias, m_nets[n]->layers[l].bias,
                 v_nets[n]->layers[l].bias);
    }
  }
}

}  // namespace phaseamp
