#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "phaseamp/autodiff.hpp"
#include "phaseamp/core.hpp"
#include "phaseamp/latent.hpp"
#include "phaseamp/random.hpp"

namespace phaseamp {

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out

  bool operator==(const DenseLayer&) const = default;
};

/// input -> hidden... (ReLU) -> output (linear).
struct MlpParams {
  std::vector<DenseLayer> layers;

  Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  std::vector<Index> hidden_widths() const {
    std::vector<Index> widths;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) widths.push_back(layers[i].weight.rows());
    return widths;
  }

  bool consistent() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].bias.size() != layers[i].weight.rows()) return false;
      if (i > 0 && layers[i].weight.cols() != layers[i - 1].weight.rows()) return false;
      if (!layers[i].weight.allFinite() || !layers[i].bias.allFinite()) return false;
    }
    return !layers.empty();
  }

  bool operator==(const MlpParams&) const = default;
};

/// Forward pass over a batch; each column is one input.
inline Matrix mlp_forward(const MlpParams& mlp, const Matrix& inputs) {
  require_shape(inputs.rows() == mlp.input_dim(), "mlp_forward: input dimension mismatch");
  Matrix a = inputs;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    Matrix next = mlp.layers[i].weight * a;
    next.colwise() += mlp.layers[i].bias;
    if (i + 1 < mlp.layers.size()) next = next.cwiseMax(0.0);
    a = std::move(next);
  }
  return a;
}

/// Shapes of the two networks.
struct ModelDims {
  Index observable_dim = 0;
  Index num_phases = 1;
  Index num_amplitudes = 0;
  std::vector<Index> hidden{512, 512};

  Index latent_dim() const { return num_phases + num_amplitudes; }
  /// Encoder output / decoder input width: two values per phase, one per amplitude.
  Index lifted_dim() const { return 2 * num_phases + num_amplitudes; }
};

/// Encoder and decoder weights. Also used as the container for their gradients
/// and for optimizer moments.
struct NetworkWeights {
  MlpParams encoder;
  MlpParams decoder;

  template <class F>
  void visit(F&& f) {
    for (auto* net : {&encoder, &decoder}) {
      for (auto& layer : net->layers) {
        f(layer.weight);
        f(layer.bias);
      }
    }
  }

  template <class F>
  void visit(F&& f) const {
    for (const auto* net : {&encoder, &decoder}) {
      for (const auto& layer : net->layers) {
        f(layer.weight);
        f(layer.bias);
      }
    }
  }

  template <class F>
  void visit_pair(const NetworkWeights& other, F&& f) {
    const MlpParams* others[2] = {&other.encoder, &other.decoder};
    MlpParams* mine[2] = {&encoder, &decoder};
    for (int n = 0; n < 2; ++n) {
      require_shape(mine[n]->layers.size() == others[n]->layers.size(), "NetworkWeights: layer count mismatch");
      for (std::size_t l = 0; l < mine[n]->layers.size(); ++l) {
        f(mine[n]->layers[l].weight, others[n]->layers[l].weight);
        f(mine[n]->layers[l].bias, others[n]->layers[l].bias);
      }
    }
  }

  Index parameter_count() const {
    Index n = 0;
    visit([&n](const auto& m) { n += m.size(); });
    return n;
  }

  /// Same shapes, all zeros.
  NetworkWeights zeros_like() const {
    NetworkWeights z = *this;
    z.visit([](auto& m) { m.setZero(); });
    return z;
  }

  bool all_finite() const {
    bool ok = true;
    visit([&ok](const auto& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  bool operator==(const NetworkWeights&) const = default;
};

/// Trained model: weights plus the latent system they were trained against.
struct ModelParams {
  LatentParams latent;
  NetworkWeights weights;

  Index observable_dim() const { return weights.encoder.input_dim(); }
  Index num_phases() const { return latent.num_phases(); }
  Index num_amplitudes() const { return latent.num_amplitudes(); }

  ModelDims dims() const {
    return {observable_dim(), num_phases(), num_amplitudes(), weights.encoder.hidden_widths()};
  }

  void validate() const {
    const Index lifted = 2 * num_phases() + num_amplitudes();
    require_shape(weights.encoder.consistent() && weights.decoder.consistent(), "ModelParams: inconsistent layers");
    require_shape(weights.encoder.output_dim() == lifted, "ModelParams: encoder output width must be 2P + A");
    require_shape(weights.decoder.input_dim() == lifted, "ModelParams: decoder input width must be 2P + A");
    require_shape(weights.decoder.output_dim() == observable_dim(), "ModelParams: decoder output must match observables");
  }

  bool operator==(const ModelParams&) const = default;
};

inline MlpParams init_mlp(Index input, const std::vector<Index>& hidden, Index output, Rng& rng) {
  require(input > 0 && output > 0, "init_mlp: dimensions must be positive");
  MlpParams mlp;
  Index fan_in = input;
  std::vector<Index> widths = hidden;
  widths.push_back(output);
  for (Index fan_out : widths) {
    require(fan_out > 0, "init_mlp: hidden widths must be positive");
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (Index c = 0; c < fan_in; ++c) {
      for (Index r = 0; r < fan_out; ++r) layer.weight(r, c) = rng.uniform(-s, s);
    }
    mlp.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return mlp;
}

/// Uniform fan-balanced weights in [-s, s], s = sqrt(6 / (fan_in + fan_out)); zero biases.
inline NetworkWeights init_params(std::uint64_t seed, const ModelDims& dims) {
  Rng rng(seed);
  NetworkWeights w;
  w.encoder = init_mlp(dims.observable_dim, dims.hidden, dims.lifted_dim(), rng);
  w.decoder = init_mlp(dims.lifted_dim(), dims.hidden, dims.observable_dim, rng);
  return w;
}

inline ModelParams init_model(std::uint64_t seed, Index observable_dim, const LatentParams& latent,
                              const std::vector<Index>& hidden) {
  ModelDims dims{observable_dim, latent.num_phases(), latent.num_amplitudes(), hidden};
  return {latent, init_params(seed, dims)};
}

struct EncodeDiagnostics {
  Index degenerate_heads = 0;  // phase heads with y0 = y1 = 0
};

/// Batch encoder. Columns of `x` are observables; rows of the result are
/// [phi (wrapped to (-pi, pi]), r].
inline Matrix encode_batch(const ModelParams& model, const Matrix& x, EncodeDiagnostics* diag = nullptr) {
  const Matrix raw = mlp_forward(model.weights.encoder, x);
  const Index p = model.num_phases();
  const Index a = model.num_amplitudes();
  Matrix z(p + a, raw.cols());
  for (Index i = 0; i < p; ++i) {
    for (Index c = 0; c < raw.cols(); ++c) {
      const double y0 = raw(2 * i, c), y1 = raw(2 * i + 1, c);
      if (diag && y0 == 0.0 && y1 == 0.0) ++diag->degenerate_heads;
      z(i, c) = head_phase(y0, y1);
    }
  }
  z.bottomRows(a) = raw.bottomRows(a);
  return z;
}

inline LatentState encode(const ModelParams& model, const Vector& x, EncodeDiagnostics* diag = nullptr) {
  require(x.allFinite(), "encode: observable must be finite");
  return LatentState::from_stacked(encode_batch(model, x, diag).col(0), model.num_phases());
}

/// Builds [sin phi_1, cos phi_1, ..., sin phi_P, cos phi_P, r] for each column.
inline Matrix phase_lift(const Matrix& z, Index num_phases) {
  const Index a = z.rows() - num_phases;
  Matrix lifted(2 * num_phases + a, z.cols());
  for (Index i = 0; i < num_phases; ++i) {
    lifted.row(2 * i) = z.row(i).array().sin();
    lifted.row(2 * i + 1) = z.row(i).array().cos();
  }
  lifted.bottomRows(a) = z.bottomRows(a);
  return lifted;
}

inline Matrix decode_batch(const ModelParams& model, const Matrix& z) {
  require_shape(z.rows() == model.latent.dim(), "decode: latent dimension mismatch");
  return mlp_forward(model.weights.decoder, phase_lift(z, model.num_phases()));
}

inline Vector decode(const ModelParams& model, const LatentState& z) {
  require(z.is_finite(), "decode: latent state must be finite");
  return decode_batch(model, z.stacked()).col(0);
}

/// Adapter giving a ModelParams the encode/decode member interface used by the
/// generic evaluation and control code.
class NeuralModel {
 public:
  explicit NeuralModel(ModelParams params) : params_(std::move(params)) { params_.validate(); }

  LatentState encode(const Vector& x) const { return phaseamp::encode(params_, x); }
  Vector decode(const LatentState& z) const { return phaseamp::decode(params_, z); }
  Matrix decode_batch(const Matrix& z) const { return phaseamp::decode_batch(params_, z); }
  const LatentParams& latent() const { return params_.latent; }
  const ModelParams& params() const { return params_; }

 private:
  ModelParams params_;
};

// ---- tape-side networks ---------------------------------------------------

struct MlpVars {
  std::vector<std::pair<ad::Var, ad::Var>> layers;  // (weight, bias)
};

struct NetworkVars {
  MlpVars encoder;
  MlpVars decoder;
};

inline MlpVars register_mlp(ad::Tape& tape, const MlpParams& mlp) {
  MlpVars vars;
  for (const auto& layer : mlp.layers) {
    vars.layers.emplace_back(tape.variable(layer.weight), tape.variable(Matrix(layer.bias)));
  }
  return vars;
}

inline NetworkVars register_network(ad::Tape& tape, const NetworkWeights& w) {
  return {register_mlp(tape, w.encoder), register_mlp(tape, w.decoder)};
}

inline ad::Var mlp_forward(ad::Tape& tape, const MlpVars& mlp, ad::Var input) {
  ad::Var a = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    a = tape.add_bias(tape.matmul(mlp.layers[i].first, a), mlp.layers[i].second);
    if (i + 1 < mlp.layers.size()) a = tape.relu(a);
  }
  return a;
}

inline ad::Var encode_on_tape(ad::Tape& tape, const NetworkVars& net, ad::Var x, Index num_phases) {
  return tape.phase_head(mlp_forward(tape, net.encoder, x), num_phases);
}

inline ad::Var decode_on_tape(ad::Tape& tape, const NetworkVars& net, ad::Var z, Index num_phases) {
  return mlp_forward(tape, net.decoder, tape.phase_lift(z, num_phases));
}

/// Gradients of the last backward() target, in NetworkWeights layout.
inline NetworkWeights collect_gradients(const ad::Tape& tape, const NetworkVars& vars, const NetworkWeights& shape) {
  NetworkWeights g = shape;
  const MlpVars* src[2] = {&vars.encoder, &vars.decoder};
  MlpParams* dst[2] = {&g.encoder, &g.decoder};
  for (int n = 0; n < 2; ++n) {
    for (std::size_t l = 0; l < dst[n]->layers.size(); ++l) {
      dst[n]->layers[l].weight = tape.grad(src[n]->layers[l].first);
      dst[n]->layers[l].bias = tape.grad(src[n]->layers[l].second).col(0);
    }
  }
  return g;
}

}  // namespace phaseamp
