#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "phaseamp/adam.hpp"
#include "phaseamp/checkpoint.hpp"
#include "phaseamp/core.hpp"
#include "phaseamp/dataset.hpp"
#include "phaseamp/latent.hpp"
#include "phaseamp/neural.hpp"
#include "phaseamp/objective.hpp"
#include "phaseamp/random.hpp"

namespace phaseamp {

struct TrainConfig {
  Index batch_size = 255;
  Index iterations = 5000;
  AdamConfig adam;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;
  std::vector<Index> hidden{512, 512};

  void validate() const {
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(iterations >= 0, "train: iterations must be >= 0");
    require(!hidden.empty(), "train: at least one hidden layer");
    for (Index h : hidden) require(h >= 1, "train: hidden widths must be >= 1");
    adam.validate();
    objective.validate();
  }
};

struct TrainResult {
  ModelParams model;
  TrainingProgress progress;
  std::vector<LossBreakdown> history;  // one entry per iteration run in this call

  Checkpoint checkpoint() const { return {model, progress}; }
};

/// Raised when a loss or update turns non-finite. Carries the state from before
/// the failing iteration.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, TrainResult last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const TrainResult& last_good() const { return last_good_; }

 private:
  TrainResult last_good_;
};

/// Called after every iteration with its global index and batch-mean loss.
using TrainCallback = std::function<void(std::int64_t iteration, const LossBreakdown& loss)>;

namespace detail {
inline constexpr std::uint64_t kInitStream = 0x1717;
inline constexpr std::uint64_t kIterationStream = 0x2929;
}  // namespace detail

/// Fresh model for a run: weights drawn from a stream of the training seed.
inline ModelParams initial_model(const Dataset& data, const LatentParams& latent, const TrainConfig& cfg) {
  return init_model(Rng(cfg.seed).split(detail::kInitStream).next_u64(), data.dim(), latent, cfg.hidden);
}

/// Adam on the batch-mean loss. Iteration i draws its windows and noise from
/// streams keyed by (seed, i), so a run resumed from a checkpoint reproduces the
/// uninterrupted run exactly.
inline TrainResult train(const Dataset& dataset, const LatentParams& latent, const TrainConfig& cfg,
                         const std::optional<Checkpoint>& resume = std::nullopt, const TrainCallback& callback = {}) {
  cfg.validate();
  require(std::abs(dataset.dt() - latent.dt()) <= 1e-9, "train: dataset dt does not match latent dt");
  const Dataset data = dataset.canonical();
  const std::vector<WindowRef> windows = data.windows(cfg.objective.horizon);

  TrainResult state;
  if (resume) {
    require(resume->progress.has_value(), "train: checkpoint carries no optimizer state to resume from");
    require(resume->progress->seed == cfg.seed, "train: resume seed differs from the checkpoint seed");
    require(resume->model.latent == latent, "train: latent parameters differ from the checkpoint");
    require_shape(resume->model.observable_dim() == data.dim(), "train: checkpoint observable dimension differs from data");
    state.model = resume->model;
    state.progress = *resume->progress;
  } else {
    state.model = initial_model(data, latent, cfg);
    state.progress = {0, cfg.seed, AdamState::zeros_like(state.model.weights)};
  }

  const Rng root = Rng(cfg.seed).split(detail::kIterationStream);
  const std::int64_t end = state.progress.iteration + cfg.iterations;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<Matrix> xs(batch);
  std::vector<WindowNoise> noises(batch);
  while (state.progress.iteration < end) {
    const std::int64_t it = state.progress.iteration;
    Rng rng = root.split(static_cast<std::uint64_t>(it));
    for (std::size_t b = 0; b < batch; ++b) {
      xs[b] = data.window(windows[rng.below(windows.size())]);
    }
    for (std::size_t b = 0; b < batch; ++b) {
      Rng noise_rng = rng.split(b);
      noises[b] = WindowNoise::draw(latent.dim(), xs[b].cols() - 1, cfg.objective, noise_rng);
    }

    BatchResult step;
    try {
      step = batch_loss_and_gradient(xs, noises, state.model, cfg.objective);
    } catch (const NumericalError& e) {
      throw TrainingDiverged("iteration " + std::to_string(it) + ": " + e.what(), state);
    }
    if (!step.gradient.all_finite()) {
      throw TrainingDiverged("iteration " + std::to_string(it) + ": gradient is not finite", state);
    }
    NetworkWeights weights = state.model.weights;
    AdamState adam = state.progress.adam;
    adam_step(weights, step.gradient, adam, cfg.adam);
    if (!weights.all_finite()) {
      throw TrainingDiverged("iteration " + std::to_string(it) + ": parameters are not finite", state);
    }
    state.model.weights = std::move(weights);
    state.progress.adam = std::move(adam);
    state.progress.iteration = it + 1;
    state.history.push_back(step.loss);
    if (callback) callback(it, step.loss);
  }
  return state;
}

/// What the evaluation and control code needs from a model.
template <class M>
concept LatentModel = requires(const M& m, const Vector& x, const LatentState& z, const Matrix& zs) {
  { m.latent() } -> std::convertible_to<const LatentParams&>;
  { m.encode(x) } -> std::convertible_to<LatentState>;
  { m.decode(z) } -> std::convertible_to<Vector>;
  { m.decode_batch(zs) } -> std::convertible_to<Matrix>;
};

/// Decoded open-loop rollout from the encoding of x0: column k is zeta(f(h(x0), k)).
template <LatentModel M>
Matrix predict_rollout(const M& model, const Vector& x0, Index steps) {
  require(steps >= 1, "predict_rollout: steps must be >= 1");
  const LatentParams& p = model.latent();
  const LatentState z0 = model.encode(x0);
  Matrix z(p.dim(), steps);
  for (Index k = 0; k < steps; ++k) {
    const double t = p.dt() * static_cast<double>(k);
    for (Index i = 0; i < p.num_phases(); ++i) z(i, k) = z0.phi[i] + p.omega()[i] * t;
    for (Index j = 0; j < p.num_amplitudes(); ++j) z(p.num_phases() + j, k) = std::exp(-p.lambda()[j] * t) * z0.r[j];
  }
  return model.decode_batch(z);
}

/// sqrt(mean_k ||x_k - xhat_k||^2) over the first `steps` columns.
inline double trajectory_rmse(const Matrix& truth, const Matrix& predicted) {
  require_shape(truth.rows() == predicted.rows() && truth.cols() == predicted.cols(), "rmse: shape mismatch");
  require(truth.cols() >= 1, "rmse: empty trajectory");
  return std::sqrt((truth - predicted).colwise().squaredNorm().mean());
}

/// Per-trajectory open-loop RMSE (no noise): encode x_0, roll out analytically, decode.
template <LatentModel M>
std::vector<double> rollout_rmse_per_trajectory(const M& model, const std::vector<Trajectory>& test, Index steps) {
  require(!test.empty(), "evaluate_rmse: no test trajectories");
  std::vector<double> out;
  for (const auto& tr : test) {
    require_shape(tr.dim() == static_cast<Index>(model.decode(model.encode(tr.data.col(0))).size()),
                  "evaluate_rmse: model output dimension differs from test data");
    const Index n = std::min(steps, tr.steps());
    out.push_back(trajectory_rmse(tr.data.leftCols(n), predict_rollout(model, tr.data.col(0), n)));
  }
  return out;
}

template <LatentModel M>
double evaluate_rmse(const M& model, const std::vector<Trajectory>& test, Index steps) {
  const auto per = rollout_rmse_per_trajectory(model, test, steps);
  double s = 0.0;
  for (double v : per) s += v;
  return s / static_cast<double>(per.size());
}

}  // namespace phaseamp
