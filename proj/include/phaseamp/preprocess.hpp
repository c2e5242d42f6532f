#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "phaseamp/core.hpp"
#include "phaseamp/dataset.hpp"

namespace phaseamp {

/// Second-order Butterworth low-pass (bilinear transform with prewarping).
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;

  static Biquad butterworth_lowpass(double cutoff_hz, double sample_hz) {
    require(cutoff_hz > 0.0 && sample_hz > 0.0, "biquad: frequencies must be > 0");
    require(cutoff_hz < 0.5 * sample_hz, "biquad: cutoff must be below Nyquist");
    const double k = std::tan(kPi * cutoff_hz / sample_hz);
    const double norm = 1.0 / (1.0 + std::sqrt(2.0) * k + k * k);
    Biquad q;
    q.b0 = k * k * norm;
    q.b1 = 2.0 * q.b0;
    q.b2 = q.b0;
    q.a1 = 2.0 * (k * k - 1.0) * norm;
    q.a2 = (1.0 - std::sqrt(2.0) * k + k * k) * norm;
    return q;
  }

  /// |H(e^{i w})| at frequency f.
  double magnitude(double f_hz, double sample_hz) const {
    const std::complex<double> z = std::polar(1.0, -kTwoPi * f_hz / sample_hz);
    return std::abs((b0 + b1 * z + b2 * z * z) / (1.0 + a1 * z + a2 * z * z));
  }

  /// Causal pass, state initialized to the steady state of the first sample.
  std::vector<double> run(const std::vector<double>& x) const {
    std::vector<double> y(x.size());
    if (x.empty()) return y;
    double s2 = (b2 - a2) * x[0];
    double s1 = (b1 - a1) * x[0] + s2;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double out = b0 * x[i] + s1;
      s1 = b1 * x[i] - a1 * out + s2;
      s2 = b2 * x[i] - a2 * out;
      y[i] = out;
    }
    return y;
  }

  /// Forward-backward (zero phase) with odd reflection padding at both ends.
  std::vector<double> filtfilt(const std::vector<double>& x, std::size_t pad) const {
    const std::size_t n = x.size();
    if (n < 2) return x;
    pad = std::min(pad, n - 1);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
    std::vector<double> y = run(ext);
    std::reverse(y.begin(), y.end());
    y = run(y);
    std::reverse(y.begin(), y.end());
    return {y.begin() + static_cast<std::ptrdiff_t>(pad), y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
  }
};

/// Integer decimation stride whose resulting rate is nearest the target.
inline Index decimation_stride(double source_hz, double target_hz) {
  require(target_hz > 0.0 && target_hz <= source_hz, "preprocess: target rate must be in (0, source rate]");
  const double ratio = source_hz / target_hz;
  const Index lo = std::max<Index>(1, static_cast<Index>(std::floor(ratio)));
  const Index hi = lo + 1;
  const double err_lo = std::abs(source_hz / static_cast<double>(lo) - target_hz);
  const double err_hi = std::abs(source_hz / static_cast<double>(hi) - target_hz);
  return err_hi < err_lo ? hi : lo;
}

/// Zero-phase low-pass then integer-stride decimation. Velocity channels named
/// by `layout` are rebuilt from the filtered positions by central differences
/// (one-sided at the ends) at the output rate.
inline Trajectory preprocess(const Trajectory& in, double target_hz, double cutoff_hz,
                             const std::optional<ObservableLayout>& layout = std::nullopt) {
  require(in.dt > 0.0 && in.steps() >= 2, "preprocess: trajectory needs at least two samples");
  const double source_hz = 1.0 / in.dt;
  const Index stride = decimation_stride(source_hz, target_hz);
  const double out_hz = source_hz / static_cast<double>(stride);
  require(cutoff_hz > 0.0 && cutoff_hz < 0.5 * out_hz, "preprocess: cutoff must be below the output Nyquist frequency");
  if (layout) layout->validate(in.dim());

  const Biquad q = Biquad::butterworth_lowpass(cutoff_hz, source_hz);
  const auto pad = static_cast<std::size_t>(std::ceil(3.0 * source_hz / cutoff_hz));
  const Index out_steps = (in.steps() - 1) / stride + 1;
  Trajectory out;
  out.dt = in.dt * static_cast<double>(stride);
  out.t0 = in.t0;
  out.data.resize(in.dim(), out_steps);
  for (Index ch = 0; ch < in.dim(); ++ch) {
    std::vector<double> row(static_cast<std::size_t>(in.steps()));
    for (Index k = 0; k < in.steps(); ++k) row[static_cast<std::size_t>(k)] = in.data(ch, k);
    const auto y = q.filtfilt(row, pad);
    for (Index k = 0; k < out_steps; ++k) out.data(ch, k) = y[static_cast<std::size_t>(k * stride)];
  }
  if (layout && layout->has_velocity() && out_steps >= 2) {
    for (std::size_t i = 0; i < layout->position.size(); ++i) {
      const Index p = layout->position[i], v = layout->velocity[i];
      for (Index k = 0; k < out_steps; ++k) {
        const Index a = std::max<Index>(k - 1, 0), b = std::min<Index>(k + 1, out_steps - 1);
        out.data(v, k) = (out.data(p, b) - out.data(p, a)) / (out.dt * static_cast<double>(b - a));
      }
    }
  }
  return out;
}

}  // namespace phaseamp
