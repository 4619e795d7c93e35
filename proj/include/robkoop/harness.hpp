#pragma once

#include "robkoop/dynamics.hpp"
#include "robkoop/noise.hpp"
#include "robkoop/predictor.hpp"

#include <json.hpp>

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace robkoop {

enum class ExperimentKind { Simulate, Identify, Forecast, LengthSweep, NoiseCompare };

ExperimentKind parse_experiment_kind(const std::string& name);
std::string experiment_name(ExperimentKind kind);

struct ModelConfig {
  DynamicsModel model = DynamicsModel::van_der_pol(1.0);
  std::optional<Eigen::VectorXd> x0;  ///< none = start at the equilibrium
  Eigen::VectorXd equilibrium_guess;
  double dt = 0.01;
  double duration = 10.0;     ///< length of the recorded segment
  double record_start = 0.0;  ///< simulation time where the record begins
  std::vector<FaultEvent> faults;
  int substeps = 1;
  bool speed_in_rad_per_s = false;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Identify;
  ModelConfig model;
  NoiseSpec noise;
  PredictorBuilder builder;
  double train_window = 4.0;
  double horizon = 2.0;
  std::vector<double> sweep_lengths{1, 2, 3, 4, 5, 6};
  double sweep_horizon = 1.0;
  std::vector<double> compare_snr_db{20.0, 17.0};
  Eigen::Index n_dominant = 4;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir;
  nlohmann::json source;  ///< the JSON the config was parsed from

  std::string hash() const;
};

/// Parses and validates a config. Errors are ValidationErrors prefixed with
/// the offending key path, e.g. "model.faults[0]: clear_time ...".
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json load_config_json(const std::string& path);
/// Applies `a.b.c=value`; the value is parsed as JSON when possible, else kept as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Clean record and its corrupted copy (absent samples kept) for one noise seed.
struct DataPair {
  Trajectory clean;
  Trajectory noisy;
};

DataPair generate_data(const ExperimentConfig& cfg, std::uint64_t noise_seed,
                       std::optional<double> snr_override = std::nullopt);

/// Continuous-time eigenvalues of the model's linearization at its
/// equilibrium, or of the map itself for LinearMap; none if no equilibrium is found.
std::optional<std::vector<std::complex<double>>> reference_eigenvalues(const ModelConfig& cfg);

/// Seed actually used for the noise of (seed, stream); stream 0 is the plain experiment.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Relative magnitude error | |l| - |l_ref| | / |l_ref| and relative distance
/// |l - l_ref| / |l_ref| of the identified mode matched to the dominant
/// oscillatory reference pair.
struct DominantModeError {
  std::complex<double> reference;
  std::complex<double> identified;
  double magnitude_rel = 0.0;
  double distance_rel = 0.0;
};
DominantModeError dominant_mode_error(const Spectrum& spec, const std::vector<std::complex<double>>& reference,
                                      Eigen::Index n_dominant);

struct RunOptions {
  std::string output_dir;  ///< overrides the config's output_dir when set
  int jobs = 1;
};

struct RunManifest {
  std::string config_hash;
  std::string version;
  std::string experiment;
  std::string status = "OK";
  std::string error;
  std::string output_dir;
  std::vector<std::string> files;  ///< relative to output_dir, sorted
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
  double total_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Runs the experiment, writes its CSVs and manifest.json into the output
/// directory. On failure the manifest is written with status FAILED and the
/// error is rethrown.
RunManifest run(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Output directory used when neither the CLI nor the config names one:
/// $ROBKOOP_OUTPUT_ROOT/<experiment>, or robkoop_out/<experiment>.
std::string default_output_dir(ExperimentKind kind);

const char* version();

}  // namespace robkoop
