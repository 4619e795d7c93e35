#pragma once

#include "robkoop/dictionary.hpp"
#include "robkoop/operator.hpp"
#include "robkoop/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace robkoop {

struct ProjectionFit {
  Eigen::MatrixXd c;           ///< n x K, x ~ C Psi(x)
  double residual_rms = 0.0;   ///< root mean square of x - C Psi(x) over all entries
};

/// Least-squares state reconstruction  min_C sum_i |x_i - C Psi(x_i)|^2  via the
/// normal equations with a 1e-12 ridge.
ProjectionFit fit_projection(const Dictionary& dictionary, const Trajectory& traj);

/// Lifted linear predictor: z_{m+1} = z_m K, x_m = C z_m^T.
struct Predictor {
  KoopmanModel model;
  Eigen::MatrixXd c;
  double projection_residual = 0.0;

  Eigen::Index state_dim() const { return c.rows(); }
  void validate() const;
};

Predictor make_predictor(KoopmanModel model, const Trajectory& training);

enum class Rollout {
  Lifted,  ///< z_n = z_0 K^n, never re-lifted
  Relift,  ///< project to state and lift again after every step
};

/// Rows z_0 .. z_n of the lifted roll-out.
Eigen::MatrixXd rollout_lifted(const Predictor& pred, const Eigen::RowVectorXd& z0, Eigen::Index n_steps);

/// n_steps + 1 predicted states starting at time t0.
Trajectory predict(const Predictor& pred, const Eigen::VectorXd& x0, Eigen::Index n_steps,
                   Rollout mode = Rollout::Lifted, double t0 = 0.0);

struct DictionarySpec {
  DictionaryKind kind = DictionaryKind::Monomials;
  int degree = 1;
  Eigen::Index n_centers = 10;
  std::uint64_t seed = 0;
  bool normalize = true;

  void validate() const;
  /// Dictionary for a state of dimension n, normalized to `training` if requested.
  Dictionary build(const Trajectory& training) const;
};

enum class StartDenoise {
  None,           ///< forecast from the last training sample
  MovingAverage,  ///< centered 5-sample average two steps before the end, advanced by the model
};

/// Everything needed to turn a training window into a predictor.
struct PredictorBuilder {
  DictionarySpec dictionary;
  Estimator estimator = Estimator::Robust;
  double ridge = 0.0;
  std::optional<double> c_tilde;  ///< none = cross-validated
  CrossValidationOptions cv;
  StartDenoise start = StartDenoise::None;
  Rollout rollout = Rollout::Lifted;

  struct Fit {
    Predictor predictor;
    std::optional<CrossValidationResult> cv;
  };

  /// Fits operator and projection on `training`; absent samples are interpolated first.
  Fit fit(const Trajectory& training) const;

  /// Forecast of n_steps beyond the last training sample. Row 0 is the
  /// (possibly denoised) start state at the last training time.
  Trajectory forecast(const Predictor& pred, const Trajectory& training, Eigen::Index n_steps) const;
};

struct ForecastReport {
  double window_start = 0.0;
  double horizon = 0.0;
  Eigen::Index training_pairs = 0;
  double c_tilde = 0.0;
  Trajectory predicted;
  std::optional<Trajectory> truth;
  /// |x_hat - x| / (|x - mean_train| + 1e-12) over horizon steps 1..n
  std::vector<double> per_state_relative_error;
  double mean_relative_error = 0.0;
  /// |x_hat - x| / |x|
  std::vector<double> per_state_plain_error;
  double mean_plain_error = 0.0;
};

/// Per-state relative errors of `predicted` vs `truth`, skipping row 0.
std::vector<double> relative_errors(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
                                    const Eigen::VectorXd& training_mean);
std::vector<double> plain_errors(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);

/// Fit on samples [first, first + train_steps] and forecast horizon_steps.
ForecastReport single_window_forecast(const PredictorBuilder& builder, const Trajectory& data,
                                      const Trajectory* clean, Eigen::Index first, Eigen::Index train_steps,
                                      Eigen::Index horizon_steps);

/// Fit-on-window / forecast-horizon windows with stride = horizon, in chronological order.
std::vector<ForecastReport> rolling_forecast(const PredictorBuilder& builder, const Trajectory& data,
                                             double train_window, double horizon,
                                             const Trajectory* clean = nullptr, int jobs = 1);

struct LengthPoint {
  double train_length = 0.0;
  double mean_relative_error = 0.0;
  double mean_plain_error = 0.0;
  ForecastReport report;
};

/// Fit on the first L seconds of `noisy` for each L, forecast `horizon` and score against `clean`.
std::vector<LengthPoint> error_vs_training_length(const PredictorBuilder& builder, const Trajectory& noisy,
                                                  const Trajectory& clean, const std::vector<double>& lengths,
                                                  double horizon = 1.0, int jobs = 1);

}  // namespace robkoop
