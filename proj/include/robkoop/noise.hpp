#pragma once

#include "robkoop/trajectory.hpp"

#include <cstdint>
#include <optional>

namespace robkoop {

/// Measurement corruption recipe.
struct NoiseSpec {
  std::optional<double> snr_db;    ///< per-channel SNR against the channel's AC power; none = clean
  double missing_fraction = 0.0;   ///< probability that an interior sample is dropped
  double outlier_fraction = 0.0;   ///< probability that an entry is replaced by an outlier
  double outlier_magnitude = 5.0;  ///< outlier offset in multiples of the channel std
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adds white Gaussian noise with variance P_i / 10^(snr/10) to channel i, where
/// P_i is the mean squared deviation of the clean channel from its mean; then
/// injects outliers (value +/- magnitude * std_i) and drops whole samples.
/// The first and last samples are never dropped so the result can always be
/// interpolated. Deterministic given the seed.
Trajectory corrupt(const Trajectory& traj, const NoiseSpec& spec);

/// Fills absent entries by linear interpolation in time, channel by channel.
Trajectory interpolate_missing(const Trajectory& traj);

/// Realized 10 log10(P_signal / P_noise) of `noisy - clean` for one channel.
double realized_snr_db(const Trajectory& clean, const Trajectory& noisy, Eigen::Index channel);

}  // namespace robkoop
