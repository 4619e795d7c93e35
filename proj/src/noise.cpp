#include "robkoop/noise.hpp"

#include "robkoop/error.hpp"

#include <cmath>
#include <random>
#include <string>

namespace robkoop {

void NoiseSpec::validate() const {
  if (snr_db && !std::isfinite(*snr_db)) throw ValidationError("noise snr_db must be finite");
  if (!(missing_fraction >= 0.0 && missing_fraction < 1.0)) {
    throw ValidationError("noise missing_fraction must lie in [0, 1)");
  }
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw ValidationError("noise outlier_fraction must lie in [0, 1)");
  }
  if (!(outlier_magnitude >= 0.0) || !std::isfinite(outlier_magnitude)) {
    throw ValidationError("noise outlier_magnitude must be finite and non-negative");
  }
}

namespace {

// Mean and mean squared deviation over present entries of one channel.
std::pair<double, double> channel_moments(const Eigen::MatrixXd& x, Eigen::Index i) {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    if (!is_absent(x(k, i))) {
      sum += x(k, i);
      ++count;
    }
  }
  if (count == 0) return {0.0, 0.0};
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    if (!is_absent(x(k, i))) ss += (x(k, i) - mean) * (x(k, i) - mean);
  }
  return {mean, ss / static_cast<double>(count)};
}

}  // namespace

Trajectory corrupt(const Trajectory& traj, const NoiseSpec& spec) {
  spec.validate();
  if (traj.empty()) throw ValidationError("corrupt: trajectory is empty");
  const Eigen::Index n = traj.dim();
  const Eigen::Index rows = traj.size();

  Eigen::VectorXd power(n);
  for (Eigen::Index i = 0; i < n; ++i) power(i) = channel_moments(traj.states, i).second;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Trajectory out = traj;
  if (spec.snr_db) {
    Eigen::VectorXd sigma(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(power(i) > 0.0)) {
        throw ValidationError("corrupt: channel " + std::to_string(i + 1) +
                              " has zero AC power, so an SNR of " + format_double(*spec.snr_db) +
                              " dB is undefined");
      }
      sigma(i) = std::sqrt(power(i) / std::pow(10.0, *spec.snr_db / 10.0));
    }
    for (Eigen::Index k = 0; k < rows; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) out.states(k, i) += sigma(i) * gauss(rng);
    }
  }

  if (spec.outlier_fraction > 0.0) {
    for (Eigen::Index k = 0; k < rows; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const bool hit = unit(rng) < spec.outlier_fraction;
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        if (hit) out.states(k, i) += sign * spec.outlier_magnitude * std::sqrt(power(i));
      }
    }
  }

  if (spec.missing_fraction > 0.0) {
    for (Eigen::Index k = 1; k + 1 < rows; ++k) {
      if (unit(rng) < spec.missing_fraction) out.states.row(k).setConstant(kAbsent);
    }
  }
  return out;
}

Trajectory interpolate_missing(const Trajectory& traj) {
  Trajectory out = traj;
  const Eigen::Index rows = traj.size();
  for (Eigen::Index i = 0; i < traj.dim(); ++i) {
    if (rows == 0) break;
    if (is_absent(traj.states(0, i)) || is_absent(traj.states(rows - 1, i))) {
      throw ValidationError("interpolate_missing: channel " + std::to_string(i + 1) +
                            " has a leading or trailing gap that cannot be extrapolated");
    }
    Eigen::Index prev = 0;
    for (Eigen::Index k = 1; k < rows; ++k) {
      if (is_absent(traj.states(k, i))) continue;
      if (k - prev > 1) {
        const double a = traj.states(prev, i);
        const double b = traj.states(k, i);
        for (Eigen::Index m = prev + 1; m < k; ++m) {
          const double w = static_cast<double>(m - prev) / static_cast<double>(k - prev);
          out.states(m, i) = (1.0 - w) * a + w * b;
        }
      }
      prev = k;
    }
  }
  return out;
}

double realized_snr_db(const Trajectory& clean, const Trajectory& noisy, Eigen::Index channel) {
  if (clean.size() != noisy.size() || clean.dim() != noisy.dim()) {
    throw ValidationError("realized_snr_db: trajectories differ in shape");
  }
  if (channel < 0 || channel >= clean.dim()) throw ValidationError("realized_snr_db: bad channel");
  const double signal = channel_moments(clean.states, channel).second;
  const Eigen::MatrixXd diff = noisy.states - clean.states;
  double ss = 0.0;
  for (Eigen::Index k = 0; k < diff.rows(); ++k) ss += diff(k, channel) * diff(k, channel);
  const double noise = ss / static_cast<double>(diff.rows());
  return 10.0 * std::log10(signal / noise);
}

}  // namespace robkoop
