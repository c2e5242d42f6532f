#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "phaseamp/core.hpp"

namespace phaseamp {

/// Uniformly sampled observables: column k is x_k, sampled at t0 + k dt.
struct Trajectory {
  Matrix data;  // N x steps
  double dt = 0.0;
  double t0 = 0.0;

  Index dim() const { return data.rows(); }
  Index steps() const { return data.cols(); }
  double duration() const { return dt * static_cast<double>(std::max<Index>(steps() - 1, 0)); }

  bool operator==(const Trajectory& o) const { return dt == o.dt && t0 == o.t0 && data == o.data; }
};

/// Which observable rows hold positions and which hold the matching velocities
/// (velocity[i] is the derivative of position[i]). Velocity may be empty.
struct ObservableLayout {
  std::vector<Index> position;
  std::vector<Index> velocity;

  bool has_velocity() const { return !velocity.empty(); }

  void validate(Index dim) const {
    require_shape(velocity.empty() || velocity.size() == position.size(),
                  "layout: velocity channels must pair with position channels");
    std::vector<bool> seen(static_cast<std::size_t>(std::max<Index>(dim, 0)), false);
    for (const auto* list : {&position, &velocity}) {
      for (Index c : *list) {
        require_shape(c >= 0 && c < dim, "layout: channel index out of range");
        require_shape(!seen[static_cast<std::size_t>(c)], "layout: channel listed twice");
        seen[static_cast<std::size_t>(c)] = true;
      }
    }
  }

  /// All channels are positions.
  static ObservableLayout positions_only(Index dim) {
    ObservableLayout l;
    for (Index i = 0; i < dim; ++i) l.position.push_back(i);
    return l;
  }

  /// First half positions, second half velocities.
  static ObservableLayout position_velocity(Index half) {
    ObservableLayout l;
    for (Index i = 0; i < half; ++i) {
      l.position.push_back(i);
      l.velocity.push_back(half + i);
    }
    return l;
  }
};

/// One training window: `length` consecutive samples of trajectory `trajectory`.
struct WindowRef {
  std::size_t trajectory = 0;
  Index start = 0;
  Index length = 0;
};

class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::vector<Trajectory> trajectories) : trajectories_(std::move(trajectories)) {
    require(!trajectories_.empty(), "dataset: no trajectories");
    for (const auto& t : trajectories_) {
      require(t.steps() >= 1, "dataset: empty trajectory");
      require(t.dt > 0.0, "dataset: dt must be > 0");
      require(t.data.allFinite(), "dataset: non-finite sample");
      require_shape(t.dim() == trajectories_.front().dim(), "dataset: trajectories disagree on observable count");
      require(std::abs(t.dt - trajectories_.front().dt) <= 1e-9, "dataset: trajectories disagree on dt");
    }
  }

  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  std::size_t size() const { return trajectories_.size(); }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  Index dim() const { return trajectories_.empty() ? 0 : trajectories_.front().dim(); }
  double dt() const { return trajectories_.empty() ? 0.0 : trajectories_.front().dt; }

  Index total_steps() const {
    Index n = 0;
    for (const auto& t : trajectories_) n += t.steps();
    return n;
  }

  /// Copy with trajectories sorted by content, so anything indexed over the
  /// result is independent of the order trajectories were supplied in.
  Dataset canonical() const {
    std::vector<Trajectory> sorted = trajectories_;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Trajectory& a, const Trajectory& b) {
      if (a.steps() != b.steps()) return a.steps() < b.steps();
      if (a.t0 != b.t0) return a.t0 < b.t0;
      return std::lexicographical_compare(a.data.data(), a.data.data() + a.data.size(), b.data.data(),
                                          b.data.data() + b.data.size());
    });
    return Dataset(std::move(sorted));
  }

  /// Every horizon-T window (T + 1 samples). Trajectories shorter than that
  /// contribute one truncated window covering all their samples.
  std::vector<WindowRef> windows(Index horizon) const {
    require(horizon >= 1, "dataset: horizon must be >= 1");
    std::vector<WindowRef> out;
    for (std::size_t i = 0; i < trajectories_.size(); ++i) {
      const Index steps = trajectories_[i].steps();
      if (steps < horizon + 1) {
        out.push_back({i, 0, steps});
        continue;
      }
      for (Index s = 0; s + horizon + 1 <= steps; ++s) out.push_back({i, s, horizon + 1});
    }
    return out;
  }

  Matrix window(const WindowRef& w) const { return trajectories_.at(w.trajectory).data.middleCols(w.start, w.length); }

 private:
  std::vector<Trajectory> trajectories_;
};

// ---- CSV ------------------------------------------------------------------
//
// Header `t,x0,...,x{N-1}`, one row per sample. A row whose time does not
// increase starts a new trajectory, so several trajectories can share a file.

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectories_csv(std::ostream& os, const std::vector<Trajectory>& trajectories) {
  require(!trajectories.empty(), "csv: nothing to write");
  const Index n = trajectories.front().dim();
  os << "t";
  for (Index i = 0; i < n; ++i) os << ",x" << i;
  os << "\n";
  for (const auto& tr : trajectories) {
    require_shape(tr.dim() == n, "csv: trajectories disagree on observable count");
    for (Index k = 0; k < tr.steps(); ++k) {
      os << format_double(tr.t0 + tr.dt * static_cast<double>(k));
      for (Index i = 0; i < n; ++i) os << ',' << format_double(tr.data(i, k));
      os << '\n';
    }
  }
}

inline void save_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajectories) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "csv: cannot open " + path + " for writing");
  write_trajectories_csv(os, trajectories);
  require(static_cast<bool>(os), "csv: write failed for " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline double parse_cell(const std::string& cell, std::size_t line_no) {
  const std::string s = trim(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw InvalidArgument("csv: line " + std::to_string(line_no) + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

}  // namespace detail

/// Parses trajectories; uniform spacing is checked to within `dt_tolerance` seconds.
inline std::vector<Trajectory> read_trajectories_csv(std::istream& is, double dt_tolerance = 1e-6) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  Index n = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  require(have_header, "csv: no data rows");
  {
    const auto cells = detail::split_csv_line(detail::trim(line));
    require(cells.size() >= 2 && detail::trim(cells[0]) == "t", "csv: header must be t,x0,...,x{N-1}");
    for (std::size_t i = 1; i < cells.size(); ++i) {
      require(detail::trim(cells[i]) == "x" + std::to_string(i - 1), "csv: header must be t,x0,...,x{N-1}");
    }
    n = static_cast<Index>(cells.size() - 1);
  }

  std::vector<std::vector<double>> times;
  std::vector<std::vector<std::vector<double>>> rows;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto cells = detail::split_csv_line(t);
    if (static_cast<Index>(cells.size()) != n + 1) {
      throw InvalidArgument("csv: line " + std::to_string(line_no) + ": expected " + std::to_string(n + 1) + " columns");
    }
    const double time = detail::parse_cell(cells[0], line_no);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = detail::parse_cell(cells[static_cast<std::size_t>(i + 1)], line_no);
    if (times.empty() || time <= times.back().back()) {
      times.emplace_back();
      rows.emplace_back();
    }
    times.back().push_back(time);
    rows.back().push_back(std::move(values));
  }
  require(!times.empty(), "csv: no data rows");

  // One dt for the whole file, taken from the first trajectory with two samples.
  double dt = 0.0;
  for (const auto& ts : times) {
    if (ts.size() >= 2) {
      dt = ts[1] - ts[0];
      break;
    }
  }
  require(dt > 0.0, "csv: need at least two samples to infer dt");

  std::vector<Trajectory> out;
  for (std::size_t j = 0; j < times.size(); ++j) {
    const auto& ts = times[j];
    for (std::size_t k = 1; k < ts.size(); ++k) {
      const double expected = ts[0] + dt * static_cast<double>(k);
      if (std::abs(ts[k] - expected) > dt_tolerance) {
        throw InvalidArgument("csv: non-uniform time step near t=" + format_double(ts[k]));
      }
    }
    Trajectory tr;
    tr.dt = dt;
    tr.t0 = ts[0];
    tr.data.resize(n, static_cast<Index>(ts.size()));
    for (std::size_t k = 0; k < ts.size(); ++k) {
      for (Index i = 0; i < n; ++i) tr.data(i, static_cast<Index>(k)) = rows[j][k][static_cast<std::size_t>(i)];
    }
    require(tr.data.allFinite(), "csv: non-finite sample");
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::vector<Trajectory> load_trajectories_csv(const std::string& path, double dt_tolerance = 1e-6) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "csv: cannot open " + path);
  return read_trajectories_csv(is, dt_tolerance);
}

}  // namespace phaseamp
