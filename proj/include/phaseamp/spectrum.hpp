#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "phaseamp/core.hpp"
#include "phaseamp/dataset.hpp"

namespace phaseamp {

struct SpectrumReport {
  std::vector<double> lags_s;           // autocorrelation lag axis
  std::vector<double> autocorrelation;  // channel- and trajectory-averaged, 1 at lag 0
  std::vector<double> fft_freq_hz;
  std::vector<double> fft_magnitude;    // channel-averaged, normalized to peak 1
  std::vector<double> periods_s;        // detected, one per phase
  std::vector<double> frequencies;      // rad/s, 2 pi / period
  double lambda_min = 0.0;              // suggested exponent range, rad/s
  double lambda_max = 0.0;
  Index grid_size = 0;
};

/// `count` geometrically spaced values from lambda_min to lambda_max, both ends exact.
inline std::vector<double> lambda_grid(double lambda_min, double lambda_max, Index count) {
  require(std::isfinite(lambda_min) && std::isfinite(lambda_max), "lambda_grid: bounds must be finite");
  require(lambda_min > 0.0 && lambda_min <= lambda_max, "lambda_grid: need 0 < lambda_min <= lambda_max");
  require(count >= 1, "lambda_grid: count must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = lambda_min;
    return out;
  }
  const double ratio = std::log(lambda_max / lambda_min) / static_cast<double>(count - 1);
  for (Index i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lambda_min * std::exp(ratio * static_cast<double>(i));
  out.front() = lambda_min;
  out.back() = lambda_max;
  return out;
}

namespace detail {

/// Biased autocorrelation of a mean-removed series, normalized to 1 at lag 0.
/// Empty when the series is constant.
inline std::vector<double> normalized_acf(const Eigen::Ref<const Vector>& x) {
  const Index n = x.size();
  const Vector c = x.array() - x.mean();
  const double c0 = c.squaredNorm();
  if (!(c0 > 1e-300 * static_cast<double>(n))) return {};
  std::vector<double> r(static_cast<std::size_t>(n));
  for (Index lag = 0; lag < n; ++lag) {
    r[static_cast<std::size_t>(lag)] = c.head(n - lag).dot(c.tail(n - lag)) / c0;
  }
  return r;
}

/// Averages the normalized autocorrelation over all channels of all trajectories.
/// Trajectory series are taken as given (residual deflation passes modified copies).
inline std::vector<double> average_acf(const std::vector<Matrix>& series) {
  std::vector<double> sum, count;
  for (const auto& s : series) {
    for (Index ch = 0; ch < s.rows(); ++ch) {
      const Vector row = s.row(ch).transpose();
      const auto r = normalized_acf(row);
      if (r.empty()) continue;
      if (r.size() > sum.size()) {
        sum.resize(r.size(), 0.0);
        count.resize(r.size(), 0.0);
      }
      for (std::size_t i = 0; i < r.size(); ++i) {
        sum[i] += r[i];
        count[i] += 1.0;
      }
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= count[i];
  return sum;
}

/// Lag (in samples, sub-sample refined) of the highest local maximum past the
/// zero-lag lobe, searching lags up to max_lag. Negative when none exists.
inline double dominant_peak_lag(const std::vector<double>& r, std::size_t max_lag) {
  const std::size_t end = std::min(max_lag, r.size() >= 2 ? r.size() - 2 : 0);
  std::size_t start = 1;
  while (start <= end && r[start] <= r[start - 1]) ++start;  // leave the lag-0 lobe
  double best = -1.0, best_val = -2.0;
  for (std::size_t i = std::max<std::size_t>(start, 1); i <= end; ++i) {
    if (r[i] > r[i - 1] && r[i] >= r[i + 1] && r[i] > best_val && r[i] > 0.0) {
      best_val = r[i];
      const double denom = r[i - 1] - 2.0 * r[i] + r[i + 1];
      const double shift = denom < 0.0 ? 0.5 * (r[i - 1] - r[i + 1]) / denom : 0.0;
      best = static_cast<double>(i) + std::clamp(shift, -0.5, 0.5);
    }
  }
  return best;
}

/// Least-squares basis [1, cos, sin] per tone, one row per sample.
inline Matrix tone_basis(const std::vector<double>& ws, Index n, double dt) {
  Matrix basis(n, 1 + 2 * static_cast<Index>(ws.size()));
  for (Index k = 0; k < n; ++k) {
    const double t = dt * static_cast<double>(k);
    basis(k, 0) = 1.0;
    for (std::size_t i = 0; i < ws.size(); ++i) {
      basis(k, 1 + 2 * static_cast<Index>(i)) = std::cos(ws[i] * t);
      basis(k, 2 + 2 * static_cast<Index>(i)) = std::sin(ws[i] * t);
    }
  }
  return basis;
}

/// Removes the joint least-squares fit of the given tones (plus mean) from every row.
inline Matrix remove_tones(const Matrix& s, const std::vector<double>& ws, double dt) {
  const Matrix basis = tone_basis(ws, s.cols(), dt);
  const auto qr = basis.colPivHouseholderQr();
  Matrix out = s;
  for (Index ch = 0; ch < s.rows(); ++ch) {
    const Vector y = s.row(ch).transpose();
    out.row(ch) = (y - basis * qr.solve(y)).transpose();
  }
  return out;
}

/// Energy explained by a least-squares offset plus sinusoid at w, summed over
/// rows of every series. Maximizing it is the single-tone maximum-likelihood fit.
inline double tone_energy(const std::vector<Matrix>& series, double w, double dt) {
  double energy = 0.0;
  for (const auto& s : series) {
    const Matrix basis = tone_basis({w}, s.cols(), dt);
    const Eigen::Matrix3d gram = basis.transpose() * basis;
    const Eigen::LDLT<Eigen::Matrix3d> ldlt(gram);
    for (Index ch = 0; ch < s.rows(); ++ch) {
      const Eigen::Vector3d b = basis.transpose() * s.row(ch).transpose();
      energy += b.dot(ldlt.solve(b));
    }
  }
  return energy;
}

/// Peak of tone_energy near a coarse estimate, by bisection on the sign of a
/// central difference. The bracket stays inside the main lobe of the longest
/// series; without a sign change the coarse value is kept. Scaling the data
/// scales the energy by a positive factor, so the result is amplitude independent.
inline double refine_frequency(const std::vector<Matrix>& series, double w, double dt, std::size_t longest) {
  const double lobe = kTwoPi / (static_cast<double>(longest) * dt);
  const double half = std::min(0.05 * w, 0.5 * lobe);
  const double h = 1e-6 * w;
  auto rising = [&](double x) { return tone_energy(series, x + h, dt) > tone_energy(series, x - h, dt); };
  double lo = w - half, hi = w + half;
  if (!(rising(lo) && !rising(hi))) return w;
  for (int it = 0; it < 48 && hi - lo > 4.0 * h; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rising(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Detects P characteristic frequencies from the averaged autocorrelation. Each
/// found tone is fitted and subtracted before searching for the next one, so a
/// slower tone's harmonic peaks are not mistaken for a second frequency. The
/// autocorrelation lag is refined to sub-bin precision on the periodogram.
inline SpectrumReport estimate_frequencies(const Dataset& dataset, Index num_phases) {
  require(num_phases >= 1, "estimate_frequencies: need at least one phase");
  require(dataset.size() > 0, "estimate_frequencies: empty dataset");
  const double dt = dataset.dt();
  std::vector<Matrix> series;
  std::size_t longest = 0;
  for (const auto& t : dataset.trajectories()) {
    series.push_back(t.data);
    longest = std::max(longest, static_cast<std::size_t>(t.steps()));
  }

  SpectrumReport rep;
  rep.autocorrelation = detail::average_acf(series);
  require(!rep.autocorrelation.empty(), "estimate_frequencies: signal is constant, no periodicity to detect");
  for (std::size_t i = 0; i < rep.autocorrelation.size(); ++i) rep.lags_s.push_back(dt * static_cast<double>(i));

  std::vector<Matrix> residual = series;
  const std::size_t max_lag = longest / 2;
  for (Index p = 0; p < num_phases; ++p) {
    const auto r = p == 0 ? rep.autocorrelation : detail::average_acf(residual);
    const double lag = r.empty() ? -1.0 : detail::dominant_peak_lag(r, max_lag);
    if (lag <= 0.0) {
      throw InvalidArgument("estimate_frequencies: no autocorrelation peak for phase " + std::to_string(p) +
                            "; provide longer data (at least two periods)");
    }
    const double w = detail::refine_frequency(residual, kTwoPi / (lag * dt), dt, longest);
    rep.frequencies.push_back(w);
    for (auto& s : residual) s = detail::remove_tones(s, {w}, dt);
  }
  // Each tone was refined with the later ones still present; refine once more
  // against the signal with every other tone removed.
  if (num_phases > 1) {
    for (Index p = 0; p < num_phases; ++p) {
      std::vector<double> others;
      for (Index q = 0; q < num_phases; ++q) {
        if (q != p) others.push_back(rep.frequencies[static_cast<std::size_t>(q)]);
      }
      std::vector<Matrix> isolated;
      for (const auto& s : series) isolated.push_back(detail::remove_tones(s, others, dt));
      auto& w = rep.frequencies[static_cast<std::size_t>(p)];
      w = detail::refine_frequency(isolated, w, dt, longest);
    }
  }
  for (double w : rep.frequencies) rep.periods_s.push_back(kTwoPi / w);

  // Magnitude spectrum of the longest trajectory, channel averaged.
  const auto longest_it = std::max_element(dataset.trajectories().begin(), dataset.trajectories().end(),
                                           [](const Trajectory& a, const Trajectory& b) { return a.steps() < b.steps(); });
  const Matrix& x = longest_it->data;
  const Index n = x.cols();
  Eigen::FFT<double> fft;
  std::vector<double> mag(static_cast<std::size_t>(n / 2 + 1), 0.0);
  for (Index ch = 0; ch < x.rows(); ++ch) {
    std::vector<double> row(static_cast<std::size_t>(n));
    const double mean = x.row(ch).mean();
    for (Index k = 0; k < n; ++k) row[static_cast<std::size_t>(k)] = x(ch, k) - mean;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, row);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] += std::abs(spec[k]) / static_cast<double>(x.rows());
  }
  const double peak = *std::max_element(mag.begin(), mag.end());
  double cutoff_hz = 0.0;
  for (std::size_t k = 0; k < mag.size(); ++k) {
    rep.fft_freq_hz.push_back(static_cast<double>(k) / (static_cast<double>(n) * dt));
    rep.fft_magnitude.push_back(peak > 0.0 ? mag[k] / peak : 0.0);
    if (rep.fft_magnitude.back() >= 0.05) cutoff_hz = rep.fft_freq_hz.back();
  }
  rep.lambda_min = *std::max_element(rep.frequencies.begin(), rep.frequencies.end());
  rep.lambda_max = std::max(rep.lambda_min, kTwoPi * cutoff_hz);
  rep.grid_size = std::max<Index>(1, 32 - num_phases);
  return rep;
}

}  // namespace phaseamp
