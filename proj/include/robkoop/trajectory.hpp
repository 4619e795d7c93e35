#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <iosfwd>
#include <limits>
#include <string>

namespace robkoop {

/// Marker for an absent measurement. Trajectories store it in-band.
inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

inline bool is_absent(double v) { return std::isnan(v); }

/// Uniformly sampled multivariate time series.
///
/// Row k of `states` is the sample at time t0 + k * dt. Entries are finite or
/// absent (NaN); infinities are rejected by validate().
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.01;
  Eigen::MatrixXd states;

  Trajectory() = default;
  Trajectory(double t0_, double dt_, Eigen::MatrixXd states_)
      : t0(t0_), dt(dt_), states(std::move(states_)) {}

  Eigen::Index size() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }
  bool empty() const { return states.rows() == 0; }
  double time(Eigen::Index k) const { return t0 + static_cast<double>(k) * dt; }
  double duration() const { return size() > 0 ? static_cast<double>(size() - 1) * dt : 0.0; }

  bool has_missing() const;

  /// Samples [first, first + count) as a new trajectory with shifted t0.
  Trajectory segment(Eigen::Index first, Eigen::Index count) const;

  /// Throws ValidationError if dt <= 0, the matrix is empty, or an entry is infinite.
  void validate() const;
};

/// Number of samples spanning `seconds` at spacing dt (rounded to nearest).
Eigen::Index steps_for(double seconds, double dt);

/// CSV with header `t,x1,...,xn`, 17 significant digits, absent entries as empty fields.
void write_csv(std::ostream& out, const Trajectory& traj);
void write_csv(const std::string& path, const Trajectory& traj);
Trajectory read_csv(std::istream& in);
Trajectory read_csv(const std::string& path);

/// Shortest-roundtrip-safe formatting used by every CSV writer.
std::string format_double(double v);

}  // namespace robkoop
