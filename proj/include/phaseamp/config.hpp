#pragma once

// Run configuration for the command-line tool. Needs nlohmann/json (json.hpp).

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phaseamp/core.hpp"
#include "phaseamp/dataset.hpp"
#include "phaseamp/dmp.hpp"
#include "phaseamp/feedback.hpp"
#include "phaseamp/scenario.hpp"
#include "phaseamp/simulation.hpp"
#include "phaseamp/training.hpp"

namespace phaseamp {

using Json = nlohmann::json;

enum class DataSource { limit_cycle, lemniscate, torus, csv };

inline std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::limit_cycle: return "limit_cycle";
    case DataSource::lemniscate: return "lemniscate";
    case DataSource::torus: return "torus";
    case DataSource::csv: return "csv";
  }
  return "unknown";
}

struct PreprocessSpec {
  double target_hz = 50.0;
  double cutoff_hz = 5.0;
};

struct DatasetSpec {
  DataSource source = DataSource::limit_cycle;
  std::vector<std::string> paths;       // csv training files
  std::vector<std::string> test_paths;  // csv held-out files
  std::optional<PreprocessSpec> preprocess;
  std::optional<ObservableLayout> layout;  // explicit channel lists
  std::string layout_name;                 // "positions" or "position_velocity"; empty means per-source default

  LimitCycleParams limit_cycle;
  Index total_steps = 50000;
  LimitCycleDataConfig sampling;
  LemniscateConfig lemniscate;
  TorusSignalConfig torus;
};

struct LambdaGridSpec {
  double min = 0.0;
  double max = 0.0;
  Index count = 0;
};

struct LatentSpec {
  Index phases = 1;
  std::optional<std::vector<double>> omega;  // empty means estimate from the data
  std::optional<std::vector<double>> lambda;
  std::optional<LambdaGridSpec> lambda_grid;
};

struct FeedbackSpec {
  double gain = 0.0;
  bool per_step = true;  // gain quoted per control step rather than per second
  bool characteristic_scaling = false;
  std::vector<double> phi_ff;

  FeedbackConfig resolve(double control_dt) const {
    if (per_step) return FeedbackConfig::from_step_gain(gain, control_dt, characteristic_scaling, phi_ff);
    return {gain, characteristic_scaling, phi_ff};
  }
};

struct ScenarioSpec {
  std::vector<ScenarioKind> kinds{ScenarioKind::nominal};
  Index seeds = 10;
  ScenarioConfig base;
  DmpConfig dmp;
  bool write_episodes = true;
};

struct GridSpec {
  std::vector<double> min{-2.0, -2.0};
  std::vector<double> max{2.0, 2.0};
  Index resolution = 21;
};

struct SweepEntry {
  double alpha = 1.0;
  std::string checkpoint;
};

struct EvaluateSpec {
  Index test_trajectories = 100;
  Index rollout_steps = 400;
  std::optional<GridSpec> grid;
  std::vector<SweepEntry> sweep;
  bool dmp_baseline = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output = "out";
  DatasetSpec dataset;
  LatentSpec latent;
  TrainConfig train;
  FeedbackSpec feedback;
  ScenarioSpec scenario;
  EvaluateSpec evaluate;
  std::optional<std::string> checkpoint;  // model for evaluate and scenario
  std::optional<std::string> resume;      // checkpoint to continue training from
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), "config: " + where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(ok.count(it.key()) > 0, "config: unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config: " + where + "." + key + ": " + e.what());
  }
}

inline void parse_dataset(const Json& j, DatasetSpec& d) {
  check_keys(j, {"source", "paths", "test_paths", "preprocess", "layout", "limit_cycle", "lemniscate", "torus"}, "dataset");
  std::string source = to_string(d.source);
  read(j, "source", source, "dataset");
  if (source == "limit_cycle") d.source = DataSource::limit_cycle;
  else if (source == "lemniscate") d.source = DataSource::lemniscate;
  else if (source == "torus") d.source = DataSource::torus;
  else if (source == "csv") d.source = DataSource::csv;
  else throw InvalidArgument("config: unknown dataset.source '" + source + "'");
  read(j, "paths", d.paths, "dataset");
  read(j, "test_paths", d.test_paths, "dataset");
  if (j.contains("preprocess")) {
    const Json& p = j.at("preprocess");
    check_keys(p, {"target_hz", "cutoff_hz"}, "dataset.preprocess");
    PreprocessSpec s;
    read(p, "target_hz", s.target_hz, "dataset.preprocess");
    read(p, "cutoff_hz", s.cutoff_hz, "dataset.preprocess");
    d.preprocess = s;
  }
  if (j.contains("limit_cycle")) {
    const Json& c = j.at("limit_cycle");
    check_keys(c, {"alpha", "omega", "total_steps", "steps_per_trajectory", "dt"}, "dataset.limit_cycle");
    read(c, "alpha", d.limit_cycle.alpha, "dataset.limit_cycle");
    read(c, "omega", d.limit_cycle.omega, "dataset.limit_cycle");
    read(c, "total_steps", d.total_steps, "dataset.limit_cycle");
    read(c, "steps_per_trajectory", d.sampling.steps_per_trajectory, "dataset.limit_cycle");
    read(c, "dt", d.sampling.dt, "dataset.limit_cycle");
  }
  if (j.contains("lemniscate")) {
    const Json& c = j.at("lemniscate");
    check_keys(c, {"amplitude", "frequency_hz", "duration_s", "dt"}, "dataset.lemniscate");
    read(c, "amplitude", d.lemniscate.amplitude, "dataset.lemniscate");
    read(c, "frequency_hz", d.lemniscate.frequency_hz, "dataset.lemniscate");
    read(c, "duration_s", d.lemniscate.duration_s, "dataset.lemniscate");
    read(c, "dt", d.lemniscate.dt, "dataset.lemniscate");
  }
  if (j.contains("torus")) {
    const Json& c = j.at("torus");
    check_keys(c, {"f0_hz", "f1_hz", "duration_s", "rate_hz", "noise_std", "target_hz", "cutoff_hz"}, "dataset.torus");
    read(c, "f0_hz", d.torus.f0_hz, "dataset.torus");
    read(c, "f1_hz", d.torus.f1_hz, "dataset.torus");
    read(c, "duration_s", d.torus.duration_s, "dataset.torus");
    read(c, "rate_hz", d.torus.rate_hz, "dataset.torus");
    read(c, "noise_std", d.torus.noise_std, "dataset.torus");
    read(c, "target_hz", d.torus.target_hz, "dataset.torus");
    read(c, "cutoff_hz", d.torus.cutoff_hz, "dataset.torus");
  }
  if (j.contains("layout")) {
    const Json& l = j.at("layout");
    if (l.is_string()) {
      d.layout_name = l.get<std::string>();
      require(d.layout_name == "positions" || d.layout_name == "position_velocity",
              "config: dataset.layout must be 'positions', 'position_velocity' or an object");
    } else {
      check_keys(l, {"position", "velocity"}, "dataset.layout");
      ObservableLayout out;
      read(l, "position", out.position, "dataset.layout");
      read(l, "velocity", out.velocity, "dataset.layout");
      d.layout = out;
    }
  }
}

inline void parse_latent(const Json& j, LatentSpec& l) {
  check_keys(j, {"phases", "omega", "lambda", "lambda_grid"}, "latent");
  read(j, "phases", l.phases, "latent");
  if (j.contains("omega")) {
    const Json& o = j.at("omega");
    if (o.is_string()) {
      require(o.get<std::string>() == "estimate", "config: latent.omega must be a list or \"estimate\"");
      l.omega.reset();
    } else {
      std::vector<double> v;
      read(j, "omega", v, "latent");
      l.omega = v;
    }
  }
  if (j.contains("lambda")) {
    std::vector<double> v;
    read(j, "lambda", v, "latent");
    l.lambda = v;
  }
  if (j.contains("lambda_grid")) {
    const Json& g = j.at("lambda_grid");
    check_keys(g, {"min", "max", "count"}, "latent.lambda_grid");
    LambdaGridSpec s;
    read(g, "min", s.min, "latent.lambda_grid");
    read(g, "max", s.max, "latent.lambda_grid");
    read(g, "count", s.count, "latent.lambda_grid");
    l.lambda_grid = s;
  }
  require(!(l.lambda && l.lambda_grid), "config: give latent.lambda or latent.lambda_grid, not both");
}

inline void parse_train(const Json& j, TrainConfig& t) {
  check_keys(j, {"batch_size", "iterations", "learning_rate", "beta1", "beta2", "eps", "hidden", "gamma", "kappa", "b_f",
                 "b_h", "b_0", "beta_prior", "horizon"},
             "train");
  read(j, "batch_size", t.batch_size, "train");
  read(j, "iterations", t.iterations, "train");
  read(j, "learning_rate", t.adam.learning_rate, "train");
  read(j, "beta1", t.adam.beta1, "train");
  read(j, "beta2", t.adam.beta2, "train");
  read(j, "eps", t.adam.eps, "train");
  read(j, "hidden", t.hidden, "train");
  read(j, "gamma", t.objective.gamma, "train");
  read(j, "kappa", t.objective.kappa, "train");
  read(j, "b_f", t.objective.b_f, "train");
  read(j, "b_h", t.objective.b_h, "train");
  read(j, "b_0", t.objective.b_0, "train");
  read(j, "beta_prior", t.objective.beta_prior, "train");
  read(j, "horizon", t.objective.horizon, "train");
}

inline void parse_feedback(const Json& j, FeedbackSpec& f) {
  check_keys(j, {"gain", "per_step", "characteristic_scaling", "phi_ff"}, "feedback");
  read(j, "gain", f.gain, "feedback");
  read(j, "per_step", f.per_step, "feedback");
  read(j, "characteristic_scaling", f.characteristic_scaling, "feedback");
  read(j, "phi_ff", f.phi_ff, "feedback");
}

inline void parse_scenario(const Json& j, ScenarioSpec& s) {
  check_keys(j, {"kinds", "seeds", "anomaly_start", "anomaly_duration", "noise_std", "speed_factor", "shape_factor",
                 "feedback", "control_substeps", "robot", "divergence_limit", "dmp", "write_episodes"},
             "scenario");
  if (j.contains("kinds")) {
    std::vector<std::string> names;
    read(j, "kinds", names, "scenario");
    s.kinds.clear();
    for (const auto& n : names) s.kinds.push_back(parse_scenario_kind(n));
  }
  read(j, "seeds", s.seeds, "scenario");
  read(j, "anomaly_start", s.base.anomaly_start, "scenario");
  read(j, "anomaly_duration", s.base.anomaly_duration, "scenario");
  read(j, "noise_std", s.base.noise_std, "scenario");
  read(j, "speed_factor", s.base.speed_factor, "scenario");
  read(j, "shape_factor", s.base.shape_factor, "scenario");
  read(j, "feedback", s.base.feedback, "scenario");
  read(j, "control_substeps", s.base.control_substeps, "scenario");
  read(j, "divergence_limit", s.base.divergence_limit, "scenario");
  read(j, "write_episodes", s.write_episodes, "scenario");
  if (j.contains("robot")) {
    const Json& r = j.at("robot");
    check_keys(r, {"mass", "kp", "kd"}, "scenario.robot");
    read(r, "mass", s.base.robot.mass, "scenario.robot");
    read(r, "kp", s.base.robot.kp, "scenario.robot");
    read(r, "kd", s.base.robot.kd, "scenario.robot");
  }
  if (j.contains("dmp")) {
    const Json& d = j.at("dmp");
    check_keys(d, {"num_basis", "alpha_z", "width_factor", "regression"}, "scenario.dmp");
    read(d, "num_basis", s.dmp.num_basis, "scenario.dmp");
    read(d, "alpha_z", s.dmp.alpha_z, "scenario.dmp");
    read(d, "width_factor", s.dmp.width_factor, "scenario.dmp");
    std::string reg = "least_squares";
    read(d, "regression", reg, "scenario.dmp");
    require(reg == "least_squares" || reg == "locally_weighted",
            "config: scenario.dmp.regression must be least_squares or locally_weighted");
    s.dmp.regression = reg == "least_squares" ? DmpRegression::least_squares : DmpRegression::locally_weighted;
  }
  require(s.seeds >= 1, "config: scenario.seeds must be >= 1");
  require(!s.kinds.empty(), "config: scenario.kinds must not be empty");
}

inline void parse_evaluate(const Json& j, EvaluateSpec& e) {
  check_keys(j, {"test_trajectories", "rollout_steps", "grid", "sweep", "dmp_baseline"}, "evaluate");
  read(j, "test_trajectories", e.test_trajectories, "evaluate");
  read(j, "rollout_steps", e.rollout_steps, "evaluate");
  read(j, "dmp_baseline", e.dmp_baseline, "evaluate");
  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    check_keys(g, {"min", "max", "resolution"}, "evaluate.grid");
    GridSpec s;
    read(g, "min", s.min, "evaluate.grid");
    read(g, "max", s.max, "evaluate.grid");
    read(g, "resolution", s.resolution, "evaluate.grid");
    require(s.min.size() == 2 && s.max.size() == 2, "config: evaluate.grid bounds must have two entries");
    require(s.min[0] < s.max[0] && s.min[1] < s.max[1], "config: evaluate.grid needs min < max");
    require(s.resolution >= 2, "config: evaluate.grid.resolution must be >= 2");
    e.grid = s;
  }
  if (j.contains("sweep")) {
    require(j.at("sweep").is_array(), "config: evaluate.sweep must be an array");
    for (const Json& item : j.at("sweep")) {
      check_keys(item, {"alpha", "checkpoint"}, "evaluate.sweep[]");
      SweepEntry s;
      read(item, "alpha", s.alpha, "evaluate.sweep[]");
      read(item, "checkpoint", s.checkpoint, "evaluate.sweep[]");
      require(!s.checkpoint.empty(), "config: evaluate.sweep[] needs a checkpoint");
      e.sweep.push_back(s);
    }
  }
  require(e.test_trajectories >= 1 && e.rollout_steps >= 1, "config: evaluate sizes must be >= 1");
}

}  // namespace detail

/// Parses a run configuration. Unknown keys anywhere are rejected.
inline RunConfig parse_run_config(const Json& j) {
  detail::check_keys(j, {"seed", "output", "dataset", "latent", "train", "feedback", "scenario", "evaluate", "checkpoint",
                         "resume"},
                     "config");
  RunConfig c;
  detail::read(j, "seed", c.seed, "config");
  detail::read(j, "output", c.output, "config");
  if (j.contains("dataset")) detail::parse_dataset(j.at("dataset"), c.dataset);
  if (j.contains("latent")) detail::parse_latent(j.at("latent"), c.latent);
  if (j.contains("train")) detail::parse_train(j.at("train"), c.train);
  if (j.contains("feedback")) detail::parse_feedback(j.at("feedback"), c.feedback);
  if (j.contains("scenario")) detail::parse_scenario(j.at("scenario"), c.scenario);
  if (j.contains("evaluate")) detail::parse_evaluate(j.at("evaluate"), c.evaluate);
  if (j.contains("checkpoint")) {
    std::string path;
    detail::read(j, "checkpoint", path, "config");
    c.checkpoint = path;
  }
  if (j.contains("resume")) {
    std::string path;
    detail::read(j, "resume", path, "config");
    c.resume = path;
  }
  require(c.latent.phases >= 1, "config: latent.phases must be >= 1");
  c.train.seed = c.seed;
  c.train.validate();
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

/// Layout of the dataset after applying the per-source default and resolving
/// the symbolic names against the observable count.
inline ObservableLayout resolve_layout(const DatasetSpec& d, Index dim) {
  ObservableLayout l;
  if (d.layout) {
    l = *d.layout;
  } else {
    std::string name = d.layout_name;
    if (name.empty()) {
      name = d.source == DataSource::lemniscate || d.source == DataSource::torus ? "position_velocity" : "positions";
    }
    if (name == "position_velocity") {
      require_shape(dim % 2 == 0, "layout: position_velocity needs an even observable count");
      l = ObservableLayout::position_velocity(dim / 2);
    } else {
      l = ObservableLayout::positions_only(dim);
    }
  }
  l.validate(dim);
  return l;
}

}  // namespace phaseamp
