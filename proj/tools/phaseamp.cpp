// Command-line entry points: spectrum, train, evaluate, scenario, gen-data.
//
// Exit codes: 0 success, 2 input error, 3 numerical failure, 4 shape mismatch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phaseamp/config.hpp"
#include "phaseamp/phaseamp.hpp"

namespace fs = std::filesystem;
using namespace phaseamp;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitShape = 4;

// Stream keys for the seeds of generated data, so training and held-out sets
// never share draws.
constexpr std::uint64_t kTrainDataStream = 0xda7a;
constexpr std::uint64_t kTestDataStream = 0x7e57;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string resume;
};

RunConfig load(const Options& o) {
  RunConfig c = o.config.empty() ? parse_run_config(Json::object()) : load_run_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
  }
  if (!o.out.empty()) c.output = o.out;
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  if (!o.resume.empty()) c.resume = o.resume;
  fs::create_directories(c.output);
  return c;
}

std::uint64_t stream_seed(const RunConfig& c, std::uint64_t stream) { return Rng(c.seed).split(stream).next_u64(); }

std::ofstream open_out(const RunConfig& c, const std::string& name) {
  const fs::path p = fs::path(c.output) / name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  require(static_cast<bool>(os), "cannot open " + p.string() + " for writing");
  return os;
}

void write_json(const RunConfig& c, const std::string& name, const Json& j) {
  auto os = open_out(c, name);
  os << j.dump(2) << '\n';
}

std::vector<Trajectory> load_csv_set(const std::vector<std::string>& paths, const DatasetSpec& d, const char* what) {
  require(!paths.empty(), std::string("dataset: no ") + what + " given");
  std::vector<Trajectory> out;
  for (const auto& p : paths) {
    for (auto& t : load_trajectories_csv(p)) out.push_back(std::move(t));
  }
  if (d.preprocess) {
    std::optional<ObservableLayout> layout;
    if (d.layout || !d.layout_name.empty()) layout = resolve_layout(d, out.front().dim());
    for (auto& t : out) t = preprocess(t, d.preprocess->target_hz, d.preprocess->cutoff_hz, layout);
  }
  return out;
}

std::vector<Trajectory> training_data(const RunConfig& c) {
  const DatasetSpec& d = c.dataset;
  switch (d.source) {
    case DataSource::limit_cycle:
      return generate_limit_cycle_dataset(d.limit_cycle, d.total_steps, stream_seed(c, kTrainDataStream), d.sampling);
    case DataSource::lemniscate: return {generate_lemniscate_demo(d.lemniscate)};
    case DataSource::torus: return {generate_torus_signal(d.torus, stream_seed(c, kTrainDataStream))};
    case DataSource::csv: return load_csv_set(d.paths, d, "dataset.paths");
  }
  throw InvalidArgument("dataset: unknown source");
}

std::vector<Trajectory> test_data(const RunConfig& c, const LimitCycleParams& lc) {
  const DatasetSpec& d = c.dataset;
  const EvaluateSpec& e = c.evaluate;
  switch (d.source) {
    case DataSource::limit_cycle: {
      LimitCycleDataConfig s = d.sampling;
      s.steps_per_trajectory = e.rollout_steps;
      return generate_limit_cycle_dataset(lc, e.test_trajectories * e.rollout_steps, stream_seed(c, kTestDataStream), s);
    }
    case DataSource::lemniscate: return {generate_lemniscate_demo(d.lemniscate)};
    case DataSource::torus: return {generate_torus_signal(d.torus, stream_seed(c, kTestDataStream))};
    case DataSource::csv: return load_csv_set(d.test_paths, d, "dataset.test_paths");
  }
  throw InvalidArgument("dataset: unknown source");
}

LatentParams resolve_latent(const RunConfig& c, const Dataset& data) {
  const LatentSpec& l = c.latent;
  std::optional<SpectrumReport> rep;
  auto report = [&]() -> const SpectrumReport& {
    if (!rep) rep = estimate_frequencies(data, l.phases);
    return *rep;
  };
  const std::vector<double> omega = l.omega ? *l.omega : report().frequencies;
  std::vector<double> lambda;
  if (l.lambda) {
    lambda = *l.lambda;
  } else if (l.lambda_grid) {
    lambda = lambda_grid(l.lambda_grid->min, l.lambda_grid->max, l.lambda_grid->count);
  } else if (c.dataset.source == DataSource::limit_cycle) {
    lambda = {c.dataset.limit_cycle.lambda()};
  } else {
    lambda = lambda_grid(report().lambda_min, report().lambda_max, report().grid_size);
  }
  require_shape(static_cast<Index>(omega.size()) == l.phases, "latent: omega needs one value per phase");
  return LatentParams(omega, lambda, data.dt());
}

std::string checkpoint_path(const RunConfig& c) {
  return c.checkpoint ? *c.checkpoint : (fs::path(c.output) / "model.ckpt").string();
}

Json vec_json(const std::vector<double>& v) { return Json(v); }

Json loss_json(const LossBreakdown& b) {
  Json j = Json::object();
  const auto v = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) j[LossBreakdown::kNames[i]] = v[i];
  return j;
}

// ---- spectrum ---------------------------------------------------------------

int cmd_spectrum(const RunConfig& c) {
  const Dataset data(training_data(c));
  const SpectrumReport r = estimate_frequencies(data, c.latent.phases);
  {
    auto os = open_out(c, "autocorrelation.csv");
    os << "lag_s,acf\n";
    for (std::size_t i = 0; i < r.autocorrelation.size(); ++i) {
      os << format_double(r.lags_s[i]) << ',' << format_double(r.autocorrelation[i]) << '\n';
    }
  }
  {
    auto os = open_out(c, "fft.csv");
    os << "freq_hz,magnitude\n";
    for (std::size_t i = 0; i < r.fft_magnitude.size(); ++i) {
      os << format_double(r.fft_freq_hz[i]) << ',' << format_double(r.fft_magnitude[i]) << '\n';
    }
  }
  Json j;
  j["frequencies_rad_s"] = vec_json(r.frequencies);
  j["periods_s"] = vec_json(r.periods_s);
  j["lambda_min"] = r.lambda_min;
  j["lambda_max"] = r.lambda_max;
  j["grid_size"] = r.grid_size;
  j["lambda_grid"] = vec_json(lambda_grid(r.lambda_min, r.lambda_max, r.grid_size));
  write_json(c, "spectrum.json", j);
  for (std::size_t i = 0; i < r.frequencies.size(); ++i) {
    std::cout << "phase " << i << ": omega " << r.frequencies[i] << " rad/s (period " << r.periods_s[i] << " s)\n";
  }
  std::cout << "suggested lambda range [" << r.lambda_min << ", " << r.lambda_max << "] rad/s, " << r.grid_size
            << " values\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

int cmd_train(const RunConfig& c) {
  const Dataset data(training_data(c));
  std::optional<Checkpoint> resume;
  if (c.resume) resume = load_checkpoint(*c.resume);
  const LatentParams latent = resume ? resume->model.latent : resolve_latent(c, data);

  const fs::path log_path = fs::path(c.output) / "train_log.jsonl";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(log), "cannot open " + log_path.string());
  const std::int64_t report_every = std::max<std::int64_t>(1, c.train.iterations / 20);
  auto callback = [&](std::int64_t it, const LossBreakdown& b) {
    Json j = loss_json(b);
    j["iteration"] = it;
    log << j.dump() << '\n';
    if ((it + 1) % report_every == 0) std::cerr << "iteration " << it + 1 << " loss " << b.total << '\n';
  };

  TrainResult result;
  try {
    result = train(data, latent, c.train, resume, callback);
  } catch (const TrainingDiverged& e) {
    const std::string path = (fs::path(c.output) / "last_good.ckpt").string();
    save_checkpoint(path, e.last_good().checkpoint());
    std::cerr << "error: training diverged: " << e.what() << "\nlast good checkpoint: " << path << '\n';
    return kExitNumerical;
  }
  const std::string path = (fs::path(c.output) / "model.ckpt").string();
  save_checkpoint(path, result.checkpoint());

  Json s;
  s["iterations"] = result.progress.iteration;
  s["seed"] = result.progress.seed;
  s["omega"] = vec_json(latent.omega());
  s["lambda"] = vec_json(latent.lambda());
  s["dt"] = latent.dt();
  s["trajectories"] = data.size();
  s["total_steps"] = data.total_steps();
  if (!result.history.empty()) s["final_loss"] = loss_json(result.history.back());
  write_json(c, "summary.json", s);
  std::cout << "checkpoint: " << path << '\n';
  if (!result.history.empty()) std::cout << "final loss: " << result.history.back().total << '\n';
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

// Nearest demonstration sample to x0 over the first period gives the DMP's start phase.
double dmp_start_phase(const Trajectory& demo, const Vector& x0, double omega) {
  const auto period = std::min<Index>(demo.steps(), static_cast<Index>(std::ceil(kTwoPi / omega / demo.dt)) + 1);
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < period; ++k) {
    const double d = (demo.data.col(k) - x0).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return omega * demo.dt * static_cast<double>(best);
}

void write_vector_field(const RunConfig& c, const NeuralModel& m) {
  const GridSpec& g = *c.evaluate.grid;
  const bool truth = c.dataset.source == DataSource::limit_cycle;
  auto os = open_out(c, "vector_field.csv");
  os << "x0,x1,u0,u1" << (truth ? ",true_u0,true_u1" : "") << '\n';
  const double h = 1e-5;
  for (Index i = 0; i < g.resolution; ++i) {
    for (Index j = 0; j < g.resolution; ++j) {
      const double a = static_cast<double>(i) / static_cast<double>(g.resolution - 1);
      const double b = static_cast<double>(j) / static_cast<double>(g.resolution - 1);
      const Eigen::Vector2d x(g.min[0] + a * (g.max[0] - g.min[0]), g.min[1] + b * (g.max[1] - g.min[1]));
      const LatentState z = m.encode(x);
      const Vector u = (m.decode(advance(z, h, m.latent())) - m.decode(advance(z, -h, m.latent()))) / (2.0 * h);
      os << format_double(x[0]) << ',' << format_double(x[1]) << ',' << format_double(u[0]) << ','
         << format_double(u[1]);
      if (truth) {
        const Eigen::Vector2d f = limit_cycle_field(x, c.dataset.limit_cycle);
        os << ',' << format_double(f[0]) << ',' << format_double(f[1]);
      }
      os << '\n';
    }
  }
}

int cmd_evaluate(const RunConfig& c) {
  Json report;
  if (!c.evaluate.sweep.empty()) {
    require(c.dataset.source == DataSource::limit_cycle, "evaluate: the alpha sweep needs the limit_cycle source");
    auto os = open_out(c, "sweep.csv");
    os << "alpha,rmse\n";
    Json rows = Json::array();
    for (const auto& s : c.evaluate.sweep) {
      const NeuralModel m(load_checkpoint(s.checkpoint).model);
      LimitCycleParams p = c.dataset.limit_cycle;
      p.alpha = s.alpha;
      const double rmse = evaluate_rmse(m, test_data(c, p), c.evaluate.rollout_steps);
      os << format_double(s.alpha) << ',' << format_double(rmse) << '\n';
      rows.push_back({{"alpha", s.alpha}, {"rmse", rmse}, {"checkpoint", s.checkpoint}});
      std::cout << "alpha " << s.alpha << ": rmse " << rmse << '\n';
    }
    report["sweep"] = rows;
  }

  const std::string path = checkpoint_path(c);
  if (c.evaluate.sweep.empty() || fs::exists(path)) {
    const NeuralModel m(load_checkpoint(path).model);
    const auto test = test_data(c, c.dataset.limit_cycle);
    const auto per = rollout_rmse_per_trajectory(m, test, c.evaluate.rollout_steps);
    double mean = 0.0;
    for (double v : per) mean += v / static_cast<double>(per.size());
    std::vector<double> dmp_per;
    if (c.evaluate.dmp_baseline) {
      const auto train = training_data(c);
      const ObservableLayout layout = resolve_layout(c.dataset, train.front().dim());
      const double w = *std::min_element(m.latent().omega().begin(), m.latent().omega().end());
      const RhythmicDmp dmp = fit_dmp(position_channels(train.front(), layout), w, c.scenario.dmp);
      for (const auto& t : test) {
        const Index n = std::min(c.evaluate.rollout_steps, t.steps());
        const Vector x0 = t.data.col(0);
        const Matrix pred = dmp_prediction(dmp, layout, x0, n, dmp_start_phase(train.front(), x0, w));
        dmp_per.push_back(trajectory_rmse(t.data.leftCols(n), pred));
      }
    }
    {
      auto os = open_out(c, "evaluate.csv");
      os << "trajectory,rmse" << (dmp_per.empty() ? "" : ",dmp_rmse") << '\n';
      for (std::size_t i = 0; i < per.size(); ++i) {
        os << i << ',' << format_double(per[i]);
        if (!dmp_per.empty()) os << ',' << format_double(dmp_per[i]);
        os << '\n';
      }
    }
    report["checkpoint"] = path;
    report["trajectories"] = per.size();
    report["rollout_steps"] = c.evaluate.rollout_steps;
    report["mean_rmse"] = mean;
    std::cout << "rmse " << mean << " over " << per.size() << " trajectories\n";
    if (!dmp_per.empty()) {
      double dm = 0.0;
      for (double v : dmp_per) dm += v / static_cast<double>(dmp_per.size());
      report["dmp_mean_rmse"] = dm;
      std::cout << "dmp rmse " << dm << '\n';
    }
    if (c.evaluate.grid) {
      require_shape(m.params().observable_dim() == 2, "evaluate: the vector-field grid needs a 2-D model");
      write_vector_field(c, m);
    }
  }
  write_json(c, "evaluate.json", report);
  return 0;
}

// ---- scenario ---------------------------------------------------------------

struct Stats {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  Index diverged = 0;
};

Stats summarize(const std::vector<EpisodeLog>& logs) {
  Stats s;
  std::vector<double> v;
  for (const auto& l : logs) {
    if (l.diverged) {
      ++s.diverged;
    } else {
      v.push_back(l.tracking_rmse);
    }
  }
  if (v.empty()) return s;
  double m = 0.0;
  for (double x : v) m += x / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m) / static_cast<double>(v.size());
  s.mean = m;
  s.std = std::sqrt(var);
  return s;
}

int cmd_scenario(const RunConfig& c) {
  const NeuralModel m(load_checkpoint(checkpoint_path(c)).model);
  const Trajectory demo = training_data(c).front();
  require_shape(demo.dim() == m.params().observable_dim(), "scenario: model and demonstration dimensions differ");
  const ObservableLayout layout = resolve_layout(c.dataset, demo.dim());
  const double w = *std::min_element(m.latent().omega().begin(), m.latent().omega().end());
  const RhythmicDmp dmp = fit_dmp(position_channels(demo, layout), w, c.scenario.dmp);

  auto episodes = open_out(c, "scenario_episodes.csv");
  episodes << "kind,method,seed,rmse,diverged,recovery_jump,phase_advance,open_loop_advance\n";
  auto table = open_out(c, "scenario_table.csv");
  table << "kind,method,seeds,mean_rmse,std_rmse,diverged\n";
  Json meta;
  meta["checkpoint"] = checkpoint_path(c);
  meta["seeds"] = Json::array();
  for (Index i = 0; i < c.scenario.seeds; ++i) meta["seeds"].push_back(c.seed + static_cast<std::uint64_t>(i));
  meta["omega_dmp"] = w;
  meta["runs"] = Json::array();

  for (ScenarioKind kind : c.scenario.kinds) {
    ScenarioConfig sc = c.scenario.base;
    sc.kind = kind;
    const double control_dt = demo.dt / static_cast<double>(sc.control_substeps);
    const FeedbackConfig fb = c.feedback.resolve(control_dt);
    // the anomaly is reported with and without feedback
    std::vector<bool> variants{sc.feedback};
    if (kind == ScenarioKind::anomaly) variants.push_back(!sc.feedback);

    std::vector<std::vector<EpisodeLog>> by_method(variants.size() + 1);
    for (Index i = 0; i < c.scenario.seeds; ++i) {
      const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(i);
      for (std::size_t v = 0; v < variants.size(); ++v) {
        ScenarioConfig s = sc;
        s.feedback = variants[v];
        by_method[v].push_back(run_scenario(m, demo, layout, fb, s, seed));
      }
      by_method.back().push_back(run_dmp_scenario(dmp, demo, layout, sc, seed));
    }
    for (const auto& logs : by_method) {
      for (const auto& l : logs) {
        episodes << to_string(kind) << ',' << l.method << ',' << l.seed << ',' << format_double(l.tracking_rmse) << ','
                 << (l.diverged ? 1 : 0) << ',' << format_double(l.recovery_jump) << ','
                 << format_double(l.phase_advance) << ',' << format_double(l.open_loop_advance) << '\n';
        if (c.scenario.write_episodes) {
          auto os = open_out(c, "episodes/" + to_string(kind) + "_" + l.method + "_seed" + std::to_string(l.seed) + ".csv");
          write_episode_csv(os, l);
        }
      }
      const Stats s = summarize(logs);
      const std::string method = logs.front().method;
      table << to_string(kind) << ',' << method << ',' << logs.size() << ',' << format_double(s.mean) << ','
            << format_double(s.std) << ',' << s.diverged << '\n';
      std::cout << to_string(kind) << ' ' << method << ": rmse " << s.mean << " +/- " << s.std;
      if (s.diverged > 0) std::cout << " (" << s.diverged << " diverged)";
      std::cout << '\n';
    }

    Json run;
    run["kind"] = to_string(kind);
    run["control_dt"] = control_dt;
    run["feedback_gain_per_s"] = fb.gain;
    run["characteristic_scaling"] = fb.characteristic_scaling;
    run["noise_std"] = kind == ScenarioKind::force_noise ? sc.noise_std : 0.0;
    run["speed"] = sc.speed();
    run["shape"] = sc.shape();
    if (kind == ScenarioKind::anomaly) {
      run["cut_control_region_s"] = {sc.anomaly_start, sc.anomaly_start + sc.anomaly_duration};
    }
    meta["runs"].push_back(run);
  }
  write_json(c, "scenario.json", meta);
  return 0;
}

// ---- gen-data ---------------------------------------------------------------

int cmd_gen_data(const RunConfig& c) {
  const auto train = training_data(c);
  {
    auto os = open_out(c, "train.csv");
    write_trajectories_csv(os, train);
  }
  if (c.dataset.source != DataSource::csv) {
    auto os = open_out(c, "test.csv");
    write_trajectories_csv(os, test_data(c, c.dataset.limit_cycle));
  }
  if (c.dataset.source == DataSource::torus) {
    auto os = open_out(c, "raw.csv");
    write_trajectories_csv(os, {generate_torus_raw(c.dataset.torus, stream_seed(c, kTrainDataStream))});
  }
  Index steps = 0;
  for (const auto& t : train) steps += t.steps();
  std::cout << "wrote " << train.size() << " trajectories, " << steps << " steps to " << c.output << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-amplitude latent dynamics: learning, evaluation and interactive-feedback scenarios"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed (overrides the config)")->each([&](const std::string&) { opt.seed = seed; });
    sub->add_option("--out", opt.out, "Output directory (overrides the config)");
  };
  auto* spectrum = app.add_subcommand("spectrum", "Estimate characteristic frequencies and a lambda range");
  auto* train_cmd = app.add_subcommand("train", "Train encoder and decoder");
  auto* evaluate = app.add_subcommand("evaluate", "Open-loop RMSE on held-out trajectories");
  auto* scenario = app.add_subcommand("scenario", "Closed-loop scenarios against the DMP baseline");
  auto* gen = app.add_subcommand("gen-data", "Write the configured dataset as CSV");
  for (auto* s : {spectrum, train_cmd, evaluate, scenario, gen}) add_common(s);
  train_cmd->add_option("--resume", opt.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  for (auto* s : {evaluate, scenario}) s->add_option("--checkpoint", opt.checkpoint, "Model checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    const RunConfig cfg = load(opt);
    if (*spectrum) return cmd_spectrum(cfg);
    if (*train_cmd) return cmd_train(cfg);
    if (*evaluate) return cmd_evaluate(cfg);
    if (*scenario) return cmd_scenario(cfg);
    if (*gen) return cmd_gen_data(cfg);
  } catch (const ShapeMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitShape;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
