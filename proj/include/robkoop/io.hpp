#pragma once

#include "robkoop/operator.hpp"
#include "robkoop/predictor.hpp"

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

namespace robkoop {

/// Version tag written into every CSV family below; bump on schema changes.
inline constexpr const char* kCsvSchemaVersion = "1";

/// KoopmanModel as `# key: value` header lines (dictionary as one-line JSON,
/// dt, estimator, ridge, c_tilde) followed by the K x K matrix as CSV.
void write_model(std::ostream& out, const KoopmanModel& model);
KoopmanModel read_model(std::istream& in);

std::string dictionary_to_json(const Dictionary& dict);
Dictionary dictionary_from_json(const std::string& text);

/// `re_discrete,im_discrete,re_continuous,im_continuous,magnitude`, dominance
/// order first, degenerate eigenvalues (|lambda_d| < 1e-12) last.
void write_spectrum_csv(std::ostream& out, const Spectrum& spec);

/// Same columns for the eigenvalues of a discrete map (reference linearization).
void write_eigenvalues_csv(std::ostream& out, const std::vector<std::complex<double>>& continuous, double dt);

/// Long format `window_start,t,state_index,predicted,truth`; state_index is
/// 1-based, truth empty when not available.
void write_forecast_csv(std::ostream& out, const std::vector<ForecastReport>& reports);

/// `window_start,state_index,relative_error,plain_error` per window and state.
void write_forecast_errors_csv(std::ostream& out, const std::vector<ForecastReport>& reports);

struct TrendStats {
  double slope = 0.0;        ///< least-squares slope of error vs length
  double kendall_tau = 0.0;  ///< rank correlation of error with length
  bool non_increasing = false;
};

TrendStats trend_stats(const std::vector<double>& lengths, const std::vector<double>& errors);

/// `train_length_s,mean_rel_error` rows followed by `# key=value` trend lines.
/// With `plain`, the second column is `mean_plain_error` instead.
void write_length_csv(std::ostream& out, const std::vector<LengthPoint>& points, bool plain = false);

struct MethodSpectrum {
  std::string method;
  Spectrum spectrum;
};

/// `row_type,method,re,im,mode_error`: one `method` row per spectrum with its
/// mode_error against `reference`, then `scatter` rows with every identified
/// continuous eigenvalue (method = its name) and the reference eigenvalues
/// (method = reference).
std::string compare_modes_report(const std::vector<MethodSpectrum>& spectra,
                                 const std::vector<std::complex<double>>& reference, Eigen::Index n_dominant);

}  // namespace robkoop
