#include "robkoop/harness.hpp"

#include "robkoop/error.hpp"
#include "robkoop/io.hpp"
#include "robkoop/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>

#ifndef ROBKOOP_VERSION
#define ROBKOOP_VERSION "0.1.0"
#endif

namespace robkoop {

using nlohmann::json;
namespace fs = std::filesystem;

const char* version() { return ROBKOOP_VERSION; }

namespace {

// Validation error that remembers the key path it was raised under, so nested
// sections compose into "model.faults[0]: ...".
class SectionError : public ValidationError {
 public:
  SectionError(std::string path, std::string message)
      : ValidationError(path + ": " + message), path_(std::move(path)), message_(std::move(message)) {}
  const std::string& path() const { return path_; }
  const std::string& message() const { return message_; }

 private:
  std::string path_;
  std::string message_;
};

template <class F>
auto in_section(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SectionError& e) {
    throw SectionError(path + "." + e.path(), e.message());
  } catch (const ValidationError& e) {
    throw SectionError(path, e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(path + ": " + e.what());
  } catch (const json::exception& e) {
    throw SectionError(path, e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ValidationError("expected an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ValidationError("unknown key '" + item.key() + "'");
  }
}

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ValidationError(std::string(key) + " must be a number");
  return j[key].get<double>();
}

double positive(const json& j, const char* key, double fallback) {
  const double v = number(j, key, fallback);
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(key) + " must be positive");
  return v;
}

Eigen::VectorXd vector_of(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_of(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw ValidationError("matrix must have at least one row");
  const auto n_cols = rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != n_cols) throw ValidationError("matrix rows must have equal length");
    for (std::size_t c = 0; c < n_cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

SwingNetworkParams parse_network(const json& m, Eigen::VectorXd& guess_angles) {
  const auto network = m.value("network", std::string("benchmark"));
  if (network == "benchmark") {
    guess_angles = Eigen::Vector3d(0.30, 0.45, 0.50);
    return benchmark_swing_network();
  }
  if (network != "custom") throw ValidationError("network must be \"benchmark\" or \"custom\"");
  SwingNetworkParams p;
  p.inertia = vector_of(m.at("inertia"));
  p.damping = vector_of(m.at("damping"));
  p.emf = vector_of(m.at("emf"));
  const Eigen::Index n = p.inertia.size();
  const Eigen::MatrixXd b = matrix_of(m.at("susceptance"));
  const Eigen::MatrixXd g = m.contains("conductance") ? matrix_of(m["conductance"]) : Eigen::MatrixXd::Zero(b.rows(), b.cols());
  if (b.rows() != n || b.cols() != n || g.rows() != n || g.cols() != n) {
    throw ValidationError("susceptance/conductance must be n x n with n = number of generators");
  }
  p.y_bus = g.cast<std::complex<double>>() + std::complex<double>(0.0, 1.0) * b.cast<std::complex<double>>();
  if (m.contains("reference_susceptance")) {
    const Eigen::VectorXd br = vector_of(m["reference_susceptance"]);
    const Eigen::VectorXd gr =
        m.contains("reference_conductance") ? vector_of(m["reference_conductance"]) : Eigen::VectorXd::Zero(br.size());
    if (br.size() != n || gr.size() != n) throw ValidationError("reference admittances must have n entries");
    p.y_ref = gr.cast<std::complex<double>>() + std::complex<double>(0.0, 1.0) * br.cast<std::complex<double>>();
  }
  p.v_ref = number(m, "v_ref", 1.0);
  p.base_frequency_hz = positive(m, "base_frequency_hz", 60.0);
  guess_angles = Eigen::VectorXd::Zero(n);
  if (m.contains("equilibrium_angles")) {
    guess_angles = vector_of(m["equilibrium_angles"]);
    if (guess_angles.size() != n) throw ValidationError("equilibrium_angles must have n entries");
    p.mech_power = Eigen::VectorXd::Zero(n);
    p = p.balanced_at(guess_angles);
  } else {
    p.mech_power = vector_of(m.at("mech_power"));
  }
  return p;
}

ModelConfig parse_model(const json& m) {
  check_keys(m, {"kind", "a", "mu", "network", "inertia", "damping", "emf", "susceptance", "conductance",
                 "reference_susceptance", "reference_conductance", "mech_power", "equilibrium_angles", "v_ref",
                 "base_frequency_hz", "x0", "equilibrium_guess", "dt", "duration", "record_start", "faults",
                 "substeps", "speed_units"});
  ModelConfig mc;
  const auto kind = m.at("kind").get<std::string>();
  Eigen::VectorXd guess;
  if (kind == "linear_map") {
    mc.model = DynamicsModel::linear_map(matrix_of(m.at("a")));
    guess = Eigen::VectorXd::Zero(mc.model.state_dim());
  } else if (kind == "van_der_pol") {
    mc.model = DynamicsModel::van_der_pol(number(m, "mu", 1.0));
    guess = Eigen::VectorXd::Zero(2);
  } else if (kind == "swing_network") {
    Eigen::VectorXd angles;
    const auto params = parse_network(m, angles);
    mc.model = DynamicsModel::swing_network(params);
    guess = Eigen::VectorXd::Zero(2 * angles.size());
    guess.head(angles.size()) = angles;
  } else {
    throw ValidationError("kind must be linear_map, van_der_pol or swing_network, got '" + kind + "'");
  }
  const Eigen::Index n = mc.model.state_dim();
  mc.equilibrium_guess = m.contains("equilibrium_guess") ? vector_of(m["equilibrium_guess"]) : guess;
  if (mc.equilibrium_guess.size() != n) throw ValidationError("equilibrium_guess must have state_dim entries");

  mc.dt = positive(m, "dt", 0.01);
  if (!m.contains("duration")) throw ValidationError("duration is required");
  mc.duration = positive(m, "duration", 0.0);
  mc.substeps = static_cast<int>(number(m, "substeps", 1));
  if (mc.substeps < 1) throw ValidationError("substeps must be >= 1");

  if (m.contains("faults")) {
    if (!m["faults"].is_array()) throw ValidationError("faults must be an array");
    if (!m["faults"].empty() && kind != "swing_network") throw ValidationError("faults are only supported for swing_network");
    for (std::size_t i = 0; i < m["faults"].size(); ++i) {
      mc.faults.push_back(in_section("faults[" + std::to_string(i) + "]", [&] {
        const auto& f = m["faults"][i];
        check_keys(f, {"apply_time", "clear_time", "target_bus", "admittance_scale"});
        FaultEvent e;
        e.apply_time = f.at("apply_time").get<double>();
        e.clear_time = f.at("clear_time").get<double>();
        e.target_bus = f.at("target_bus").get<Eigen::Index>();
        e.admittance_scale = number(f, "admittance_scale", 0.0);
        e.validate();
        if (e.target_bus < 0 || e.target_bus >= n / 2) {
          throw ValidationError("target_bus " + std::to_string(e.target_bus) + " out of range");
        }
        return e;
      }));
    }
  }
  double last_clear = 0.0;
  for (const auto& f : mc.faults) last_clear = std::max(last_clear, f.clear_time);
  mc.record_start = number(m, "record_start", last_clear);
  if (!(mc.record_start >= 0.0)) throw ValidationError("record_start must be non-negative");

  if (m.contains("x0") && !(m["x0"].is_string() && m["x0"] == "equilibrium")) {
    mc.x0 = vector_of(m["x0"]);
    if (mc.x0->size() != n) throw ValidationError("x0 must have " + std::to_string(n) + " entries");
  } else if (!m.contains("x0") && kind != "swing_network") {
    throw ValidationError("x0 is required for " + kind);
  }
  const auto units = m.value("speed_units", std::string("pu"));
  if (units != "pu" && units != "rad_per_s") throw ValidationError("speed_units must be pu or rad_per_s");
  if (units == "rad_per_s" && kind != "swing_network") throw ValidationError("speed_units only applies to swing_network");
  mc.speed_in_rad_per_s = units == "rad_per_s";
  return mc;
}

NoiseSpec parse_noise(const json& j) {
  check_keys(j, {"snr_db", "missing_fraction", "outlier_fraction", "outlier_magnitude"});
  NoiseSpec n;
  if (j.contains("snr_db") && !j["snr_db"].is_null()) n.snr_db = j["snr_db"].get<double>();
  n.missing_fraction = number(j, "missing_fraction", 0.0);
  n.outlier_fraction = number(j, "outlier_fraction", 0.0);
  n.outlier_magnitude = number(j, "outlier_magnitude", 5.0);
  n.validate();
  return n;
}

DictionarySpec parse_dictionary(const json& j) {
  check_keys(j, {"kind", "degree", "n_centers", "normalize"});
  DictionarySpec d;
  const auto kind = j.value("kind", std::string("monomials"));
  if (kind == "state_plus_constant") {
    d.kind = DictionaryKind::StatePlusConstant;
  } else if (kind == "monomials") {
    d.kind = DictionaryKind::Monomials;
  } else if (kind == "gaussian_rbf") {
    d.kind = DictionaryKind::GaussianRBF;
  } else {
    throw ValidationError("kind must be state_plus_constant, monomials or gaussian_rbf");
  }
  d.degree = j.value("degree", 1);
  d.n_centers = j.value("n_centers", 10);
  d.normalize = j.value("normalize", true);
  d.validate();
  return d;
}

void parse_estimator(const json& j, PredictorBuilder& b) {
  check_keys(j, {"kind", "ridge", "c_tilde", "cv", "tol", "gap_tol", "max_iterations", "polish_every"});
  const auto kind = j.value("kind", std::string("robust"));
  if (kind != "edmd" && kind != "robust") throw ValidationError("kind must be edmd or robust");
  b.estimator = kind == "edmd" ? Estimator::Edmd : Estimator::Robust;
  b.ridge = number(j, "ridge", 0.0);
  if (!(b.ridge >= 0.0)) throw ValidationError("ridge must be non-negative");
  if (j.contains("c_tilde") && !(j["c_tilde"].is_string() && j["c_tilde"] == "cv")) {
    if (!j["c_tilde"].is_number()) throw ValidationError("c_tilde must be a number or \"cv\"");
    b.c_tilde = j["c_tilde"].get<double>();
    if (!(*b.c_tilde >= 0.0)) throw ValidationError("c_tilde must be non-negative");
  }
  if (j.contains("cv")) {
    in_section("cv", [&] {
      const auto& cv = j["cv"];
      check_keys(cv, {"folds", "grid_size", "grid_min_ratio"});
      b.cv.folds = cv.value("folds", 5);
      b.cv.grid_size = cv.value("grid_size", 20);
      b.cv.grid_min_ratio = cv.value("grid_min_ratio", 1e-6);
      if (b.cv.folds < 2 || b.cv.grid_size < 1 || !(b.cv.grid_min_ratio > 0.0 && b.cv.grid_min_ratio <= 1.0)) {
        throw ValidationError("need folds >= 2, grid_size >= 1, 0 < grid_min_ratio <= 1");
      }
    });
  }
  b.cv.lasso.tol = positive(j, "tol", 1e-10);
  b.cv.lasso.gap_tol = positive(j, "gap_tol", 1e-12);
  b.cv.lasso.max_iterations = static_cast<long>(positive(j, "max_iterations", 100000));
  b.cv.lasso.polish_every = static_cast<int>(number(j, "polish_every", 10));
  if (b.cv.lasso.polish_every < 0) throw ValidationError("polish_every must be non-negative");
}

std::vector<std::uint64_t> parse_seeds(const json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_array()) {
    for (const auto& s : j) seeds.push_back(s.get<std::uint64_t>());
  } else if (j.is_object()) {
    check_keys(j, {"first", "count"});
    const auto first = j.value("first", std::uint64_t{1});
    const auto count = j.at("count").get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) seeds.push_back(first + i);
  } else {
    seeds.push_back(j.get<std::uint64_t>());
  }
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ValidationError("seeds must be distinct");
  return seeds;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Output sink shared by concurrent tasks: each file is written once, whole.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content, std::vector<std::string>* owner = nullptr) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw ValidationError("output: cannot write " + (dir_ / name).string());
    out << content;
    out.close();
    if (!out) throw ValidationError("output: failed writing " + (dir_ / name).string());
    std::lock_guard<std::mutex> lock(mu_);
    files_.insert(name);
    if (owner) owner->push_back(name);
  }

  std::vector<std::string> files() const {
    std::lock_guard<std::mutex> lock(mu_);
    return {files_.begin(), files_.end()};
  }

 private:
  fs::path dir_;
  mutable std::mutex mu_;
  std::set<std::string> files_;
};

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  return ss.str();
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

std::string snr_tag(double snr) { return "snr" + format_double(snr); }

PredictorBuilder builder_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  PredictorBuilder b = cfg.builder;
  b.dictionary.seed = seed;
  return b;
}

Trajectory filled(const Trajectory& t) { return t.has_missing() ? interpolate_missing(t) : t; }

struct SeedResult {
  std::vector<std::string> files;
  json metrics = json::object();
  double seconds = 0.0;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::vector<Eigen::Index> speed_channels(const ModelConfig& mc) {
  std::vector<Eigen::Index> out;
  if (mc.model.kind() != ModelKind::SwingNetwork) return out;
  const Eigen::Index n = mc.model.state_dim() / 2;
  for (Eigen::Index i = n; i < 2 * n; ++i) out.push_back(i);
  return out;
}

}  // namespace

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "simulate") return ExperimentKind::Simulate;
  if (name == "identify") return ExperimentKind::Identify;
  if (name == "forecast") return ExperimentKind::Forecast;
  if (name == "length_sweep" || name == "sweep") return ExperimentKind::LengthSweep;
  if (name == "noise_compare" || name == "compare") return ExperimentKind::NoiseCompare;
  throw ValidationError("unknown experiment '" + name + "'");
}

std::string experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::Identify: return "identify";
    case ExperimentKind::Forecast: return "forecast";
    case ExperimentKind::LengthSweep: return "length_sweep";
    case ExperimentKind::NoiseCompare: return "noise_compare";
  }
  return "?";
}

std::string ExperimentConfig::hash() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a(source.dump())));
  return buf;
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  in_section("config", [&] {
    check_keys(j, {"experiment", "description", "model", "noise", "dictionary", "estimator", "forecast", "sweep",
                   "noise_compare", "seeds", "output_dir"});
  });
  cfg.source = j;
  cfg.kind = in_section("experiment", [&] { return parse_experiment_kind(j.value("experiment", std::string("identify"))); });
  if (!j.contains("model")) throw ValidationError("model: section is required");
  cfg.model = in_section("model", [&] { return parse_model(j["model"]); });
  if (j.contains("noise")) cfg.noise = in_section("noise", [&] { return parse_noise(j["noise"]); });
  if (j.contains("dictionary")) cfg.builder.dictionary = in_section("dictionary", [&] { return parse_dictionary(j["dictionary"]); });
  if (j.contains("estimator")) in_section("estimator", [&] { parse_estimator(j["estimator"], cfg.builder); });
  if (j.contains("forecast")) {
    in_section("forecast", [&] {
      const auto& f = j["forecast"];
      check_keys(f, {"train_window", "horizon", "start_denoise", "rollout"});
      cfg.train_window = positive(f, "train_window", 4.0);
      cfg.horizon = number(f, "horizon", 2.0);
      if (!(cfg.horizon >= 0.0)) throw ValidationError("horizon must be non-negative");
      const auto start = f.value("start_denoise", std::string("none"));
      if (start != "none" && start != "moving_average") throw ValidationError("start_denoise must be none or moving_average");
      cfg.builder.start = start == "none" ? StartDenoise::None : StartDenoise::MovingAverage;
      const auto rollout = f.value("rollout", std::string("lifted"));
      if (rollout != "lifted" && rollout != "relift") throw ValidationError("rollout must be lifted or relift");
      cfg.builder.rollout = rollout == "lifted" ? Rollout::Lifted : Rollout::Relift;
    });
  }
  if (j.contains("sweep")) {
    in_section("sweep", [&] {
      const auto& s = j["sweep"];
      check_keys(s, {"lengths", "horizon"});
      if (s.contains("lengths")) cfg.sweep_lengths = s["lengths"].get<std::vector<double>>();
      if (cfg.sweep_lengths.empty()) throw ValidationError("lengths must not be empty");
      for (double l : cfg.sweep_lengths) {
        if (!(l > 0.0)) throw ValidationError("lengths must be positive");
      }
      cfg.sweep_horizon = positive(s, "horizon", 1.0);
    });
  }
  if (j.contains("noise_compare")) {
    in_section("noise_compare", [&] {
      const auto& s = j["noise_compare"];
      check_keys(s, {"snr_db", "n_dominant"});
      if (s.contains("snr_db")) cfg.compare_snr_db = s["snr_db"].get<std::vector<double>>();
      if (cfg.compare_snr_db.empty()) throw ValidationError("snr_db must list at least one level");
      cfg.n_dominant = s.value("n_dominant", Eigen::Index{4});
      if (cfg.n_dominant < 1) throw ValidationError("n_dominant must be positive");
    });
  }
  if (j.contains("seeds")) cfg.seeds = in_section("seeds", [&] { return parse_seeds(j["seeds"]); });
  if (j.contains("output_dir")) cfg.output_dir = in_section("output_dir", [&] { return j["output_dir"].get<std::string>(); });
  return cfg;
}

json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config: " + path + ": " + e.what());
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::istringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ValidationError("--set: empty key segment in '" + key + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw ValidationError("--set: '" + key + "' descends into a non-object value");
      *node = json::object();
    }
    node = &(*node)[parts[i]];
  }
  *node = value;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over seed and stream
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

DataPair generate_data(const ExperimentConfig& cfg, std::uint64_t noise_seed, std::optional<double> snr_override) {
  const auto& mc = cfg.model;
  DataPair out;
  out.clean = in_section("model", [&] {
    const Eigen::VectorXd x0 = mc.x0 ? *mc.x0 : equilibrium(mc.model, mc.equilibrium_guess);
    const Eigen::Index skip = steps_for(mc.record_start, mc.dt);
    const Eigen::Index keep = steps_for(mc.duration, mc.dt);
    SimulationOptions so;
    so.substeps = mc.substeps;
    const Trajectory full = simulate(mc.model, x0, mc.dt, skip + keep, mc.faults, so);
    Trajectory rec = full.segment(skip, keep + 1);
    if (mc.speed_in_rad_per_s) rec = with_angular_speed(rec, mc.model.swing_params());
    return rec;
  });
  NoiseSpec ns = cfg.noise;
  ns.seed = noise_seed;
  if (snr_override) ns.snr_db = snr_override;
  const bool corrupts = ns.snr_db || ns.missing_fraction > 0.0 || ns.outlier_fraction > 0.0;
  out.noisy = corrupts ? in_section("noise", [&] { return corrupt(out.clean, ns); }) : out.clean;
  return out;
}

std::optional<std::vector<std::complex<double>>> reference_eigenvalues(const ModelConfig& mc) {
  if (mc.model.kind() == ModelKind::LinearMap) {
    return continuous_eigenvalues(mc.model.linear_map_params().a, mc.dt);
  }
  try {
    const Eigen::VectorXd eq = equilibrium(mc.model, mc.equilibrium_guess);
    return continuous_eigenvalues(linearize(mc.model, eq, mc.dt), mc.dt);
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

DominantModeError dominant_mode_error(const Spectrum& spec, const std::vector<std::complex<double>>& reference,
                                      Eigen::Index n_dominant) {
  if (reference.empty()) throw ValidationError("dominant_mode_error: empty reference");
  const auto ordered = sorted_modes(reference, ModeOrdering::Magnitude, spec.dt);
  std::complex<double> dom = ordered.front();
  for (const auto& r : ordered) {
    if (r.imag() > 0.0) {
      dom = r;
      break;
    }
  }
  DominantModeError out;
  out.reference = dom;
  bool found = false;
  for (const auto& m : match_modes(spec, reference, n_dominant)) {
    if (m.reference == dom) {
      out.identified = m.identified;
      found = true;
    }
  }
  if (!found) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : spec.modes()) {
      if (std::abs(c - dom) < best) {
        best = std::abs(c - dom);
        out.identified = c;
      }
    }
  }
  // a conjugate match carries the same information
  if (out.identified.imag() * dom.imag() < 0.0) out.identified = std::conj(out.identified);
  out.magnitude_rel = std::abs(std::abs(out.identified) - std::abs(dom)) / std::abs(dom);
  out.distance_rel = std::abs(out.identified - dom) / std::abs(dom);
  return out;
}

json RunManifest::to_json() const {
  json j;
  j["tool"] = "robkoop";
  j["version"] = version;
  j["experiment"] = experiment;
  j["config_hash"] = config_hash;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["output_dir"] = output_dir;
  j["csv_schema_version"] = kCsvSchemaVersion;
  j["files"] = files;
  j["seeds"] = seeds;
  j["metrics"] = metrics;
  j["timings"] = {{"total_seconds", total_seconds}};
  return j;
}

std::string default_output_dir(ExperimentKind kind) {
  const char* root = std::getenv("ROBKOOP_OUTPUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("robkoop_out");
  return (base / experiment_name(kind)).string();
}

namespace {

SeedResult run_simulate(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t index, Outputs& out) {
  SeedResult r;
  const auto data = generate_data(cfg, derive_seed(seed, 0));
  if (index == 0) out.write("clean.csv", render([&](auto& s) { write_csv(s, data.clean); }), &r.files);
  out.write("noisy_" + seed_tag(seed) + ".csv", render([&](auto& s) { write_csv(s, data.noisy); }), &r.files);
  r.metrics["samples"] = data.noisy.size();
  r.metrics["missing_rows"] = [&] {
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < data.noisy.size(); ++k) c += data.noisy.states.row(k).hasNaN() ? 1 : 0;
    return c;
  }();
  return r;
}

SeedResult run_identify(const ExperimentConfig& cfg, std::uint64_t seed,
                        const std::optional<std::vector<std::complex<double>>>& reference, Outputs& out) {
  SeedResult r;
  const auto data = generate_data(cfg, derive_seed(seed, 0));
  const Trajectory train = filled(data.noisy);
  const auto fit = in_section("estimator", [&] { return builder_for(cfg, seed).fit(train); });
  const KoopmanModel& model = fit.predictor.model;
  const Spectrum spec = spectrum(model);
  const std::string tag = seed_tag(seed);
  out.write("spectrum_" + tag + ".csv", render([&](auto& s) { write_spectrum_csv(s, spec); }), &r.files);
  out.write("model_" + tag + ".csv", render([&](auto& s) { write_model(s, model); }), &r.files);
  if (fit.cv) {
    out.write("cv_" + tag + ".csv", render([&](auto& s) {
                s << "c_tilde,cv_error\n";
                for (std::size_t i = 0; i < fit.cv->grid.size(); ++i) {
                  s << format_double(fit.cv->grid[i]) << ',' << format_double(fit.cv->errors[i]) << '\n';
                }
              }),
              &r.files);
  }
  r.metrics["c_tilde"] = model.c_tilde;
  r.metrics["projection_residual_rms"] = fit.predictor.projection_residual;
  if (reference) {
    const auto modes = spec.modes();
    const auto n_all = static_cast<Eigen::Index>(std::min(modes.size(), reference->size()));
    double max_dev = 0.0;
    for (const auto& m : match_modes(spec, *reference, n_all)) max_dev = std::max(max_dev, m.distance);
    r.metrics["max_eigenvalue_deviation"] = max_dev;
    const Eigen::Index n_dom = std::min(cfg.n_dominant, n_all);
    r.metrics["mode_error"] = mode_error(spec, *reference, n_dom);
    const std::string method = model.estimator == Estimator::Edmd ? "edmd" : "robust";
    out.write("modes_" + tag + ".csv", compare_modes_report({{method, spec}}, *reference, n_dom), &r.files);
  }
  return r;
}

SeedResult run_forecast(const ExperimentConfig& cfg, std::uint64_t seed, Outputs& out) {
  SeedResult r;
  const auto data = generate_data(cfg, derive_seed(seed, 0));
  const auto reports = in_section("forecast", [&] {
    return rolling_forecast(builder_for(cfg, seed), data.noisy, cfg.train_window, cfg.horizon, &data.clean);
  });
  const std::string tag = seed_tag(seed);
  out.write("forecast_" + tag + ".csv", render([&](auto& s) { write_forecast_csv(s, reports); }), &r.files);
  out.write("forecast_errors_" + tag + ".csv", render([&](auto& s) { write_forecast_errors_csv(s, reports); }),
            &r.files);
  std::vector<double> all, speed;
  const auto speeds = speed_channels(cfg.model);
  for (const auto& rep : reports) {
    all.push_back(rep.mean_relative_error);
    if (!speeds.empty()) {
      double s = 0.0;
      for (auto i : speeds) s += rep.per_state_relative_error[static_cast<std::size_t>(i)];
      speed.push_back(s / static_cast<double>(speeds.size()));
    }
  }
  r.metrics["windows"] = reports.size();
  r.metrics["mean_rel_error"] = mean(all);
  if (!speed.empty()) r.metrics["mean_rel_error_speed"] = mean(speed);
  return r;
}

struct SweepResult {
  SeedResult base;
  std::vector<LengthPoint> points;
};

SweepResult run_sweep(const ExperimentConfig& cfg, std::uint64_t seed, Outputs& out) {
  SweepResult r;
  const auto data = generate_data(cfg, derive_seed(seed, 0));
  r.points = in_section("sweep", [&] {
    return error_vs_training_length(builder_for(cfg, seed), data.noisy, data.clean, cfg.sweep_lengths,
                                    cfg.sweep_horizon);
  });
  const std::string tag = seed_tag(seed);
  out.write("length_sweep_" + tag + ".csv", render([&](auto& s) { write_length_csv(s, r.points); }), &r.base.files);
  out.write("length_sweep_plain_" + tag + ".csv", render([&](auto& s) { write_length_csv(s, r.points, true); }),
            &r.base.files);
  json errs = json::array();
  for (const auto& p : r.points) errs.push_back(p.mean_relative_error);
  r.base.metrics["mean_rel_error"] = errs;
  return r;
}

struct CompareRow {
  double snr = 0.0;
  std::uint64_t seed = 0;
  double edmd_error = 0.0;
  double robust_error = 0.0;
  DominantModeError edmd_dom;
  DominantModeError robust_dom;
  double c_tilde = 0.0;
};

CompareRow run_compare_one(const ExperimentConfig& cfg, std::size_t snr_index, std::uint64_t seed,
                           const std::vector<std::complex<double>>& reference, Outputs& out,
                           std::vector<std::string>& files) {
  CompareRow row;
  row.snr = cfg.compare_snr_db[snr_index];
  row.seed = seed;
  const auto data = generate_data(cfg, derive_seed(seed, snr_index + 1), row.snr);
  const Trajectory train = filled(data.noisy);
  const auto builder = builder_for(cfg, seed);
  in_section("estimator", [&] {
    const Dictionary dict = builder.dictionary.build(train);
    const Eigen::MatrixXd features = dict.lift_trajectory(train);
    if (features.rows() - 1 < dict.size()) throw ValidationError("record is shorter than the dictionary size");
    const GramPair gram = build_gram(features);
    const KoopmanModel plain = edmd(gram, builder.ridge, dict, train.dt);
    row.c_tilde = builder.c_tilde ? *builder.c_tilde : cross_validate(features, builder.cv).best;
    const KoopmanModel robust = robust_edmd(gram, row.c_tilde, builder.cv.lasso, dict, train.dt);
    const Spectrum sp = spectrum(plain);
    const Spectrum sr = spectrum(robust);
    row.edmd_error = mode_error(sp, reference, cfg.n_dominant);
    row.robust_error = mode_error(sr, reference, cfg.n_dominant);
    row.edmd_dom = dominant_mode_error(sp, reference, cfg.n_dominant);
    row.robust_dom = dominant_mode_error(sr, reference, cfg.n_dominant);
    out.write("modes_" + snr_tag(row.snr) + "_" + seed_tag(seed) + ".csv",
              compare_modes_report({{"edmd", sp}, {"robust", sr}}, reference, cfg.n_dominant), &files);
  });
  return row;
}

}  // namespace

RunManifest run(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto t_start = Clock::now();
  RunManifest manifest;
  manifest.config_hash = cfg.hash();
  manifest.version = version();
  manifest.experiment = experiment_name(cfg.kind);
  manifest.output_dir = !opts.output_dir.empty() ? opts.output_dir
                        : !cfg.output_dir.empty() ? cfg.output_dir
                                                  : default_output_dir(cfg.kind);
  const fs::path dir(manifest.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("output_dir: cannot create " + dir.string() + ": " + ec.message());
  Outputs out(dir);

  auto finish = [&] {
    manifest.files = out.files();
    manifest.total_seconds = seconds_since(t_start);
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.to_json().dump(2) << '\n';
  };

  std::vector<SeedResult> results(cfg.seeds.size());
  try {
    const int jobs = std::max(1, opts.jobs);
    switch (cfg.kind) {
      case ExperimentKind::Simulate:
        parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
          const auto t = Clock::now();
          results[i] = run_simulate(cfg, cfg.seeds[i], i, out);
          results[i].seconds = seconds_since(t);
        });
        break;
      case ExperimentKind::Identify: {
        const auto reference = reference_eigenvalues(cfg.model);
        if (reference) {
          out.write("reference_eigenvalues.csv", render([&](auto& s) { write_eigenvalues_csv(s, *reference, cfg.model.dt); }));
        }
        parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
          const auto t = Clock::now();
          results[i] = run_identify(cfg, cfg.seeds[i], reference, out);
          results[i].seconds = seconds_since(t);
        });
        double worst = 0.0;
        for (const auto& r : results) {
          if (r.metrics.contains("max_eigenvalue_deviation")) {
            worst = std::max(worst, r.metrics["max_eigenvalue_deviation"].get<double>());
          }
        }
        if (reference) manifest.metrics["max_eigenvalue_deviation"] = worst;
        break;
      }
      case ExperimentKind::Forecast: {
        parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
          const auto t = Clock::now();
          results[i] = run_forecast(cfg, cfg.seeds[i], out);
          results[i].seconds = seconds_since(t);
        });
        std::vector<double> all, speed;
        for (const auto& r : results) {
          all.push_back(r.metrics["mean_rel_error"].get<double>());
          if (r.metrics.contains("mean_rel_error_speed")) speed.push_back(r.metrics["mean_rel_error_speed"].get<double>());
        }
        manifest.metrics["mean_rel_error"] = mean(all);
        if (!speed.empty()) manifest.metrics["mean_rel_error_speed"] = mean(speed);
        break;
      }
      case ExperimentKind::LengthSweep: {
        std::vector<std::vector<LengthPoint>> points(cfg.seeds.size());
        parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
          const auto t = Clock::now();
          auto r = run_sweep(cfg, cfg.seeds[i], out);
          results[i] = std::move(r.base);
          points[i] = std::move(r.points);
          results[i].seconds = seconds_since(t);
        });
        std::vector<LengthPoint> summary(cfg.sweep_lengths.size());
        for (std::size_t l = 0; l < summary.size(); ++l) {
          summary[l].train_length = cfg.sweep_lengths[l];
          std::vector<double> rel, plain;
          for (const auto& p : points) {
            rel.push_back(p[l].mean_relative_error);
            plain.push_back(p[l].mean_plain_error);
          }
          summary[l].mean_relative_error = mean(rel);
          summary[l].mean_plain_error = mean(plain);
        }
        out.write("length_sweep.csv", render([&](auto& s) { write_length_csv(s, summary); }));
        out.write("length_sweep_plain.csv", render([&](auto& s) { write_length_csv(s, summary, true); }));
        json table = json::array();
        std::vector<double> ls, es;
        for (const auto& p : summary) {
          table.push_back({{"train_length_s", p.train_length}, {"mean_rel_error", p.mean_relative_error}});
          ls.push_back(p.train_length);
          es.push_back(p.mean_relative_error);
        }
        manifest.metrics["length_sweep"] = table;
        const auto trend = trend_stats(ls, es);
        manifest.metrics["trend"] = {{"slope", trend.slope},
                                     {"kendall_tau", trend.kendall_tau},
                                     {"non_increasing", trend.non_increasing}};
        break;
      }
      case ExperimentKind::NoiseCompare: {
        const auto reference = reference_eigenvalues(cfg.model);
        if (!reference) throw ValidationError("model: no equilibrium found for the reference linearization");
        if (cfg.n_dominant > static_cast<Eigen::Index>(reference->size())) {
          throw ValidationError("noise_compare: n_dominant exceeds the number of reference eigenvalues");
        }
        out.write("reference_eigenvalues.csv", render([&](auto& s) { write_eigenvalues_csv(s, *reference, cfg.model.dt); }));
        const std::size_t n_seeds = cfg.seeds.size();
        const std::size_t n_tasks = n_seeds * cfg.compare_snr_db.size();
        std::vector<CompareRow> rows(n_tasks);
        std::vector<std::vector<std::string>> task_files(n_tasks);
        std::vector<double> task_seconds(n_tasks, 0.0);
        parallel_for(n_tasks, jobs, [&](std::size_t t) {
          const auto start = Clock::now();
          rows[t] = run_compare_one(cfg, t / n_seeds, cfg.seeds[t % n_seeds], *reference, out, task_files[t]);
          task_seconds[t] = seconds_since(start);
        });
        for (std::size_t t = 0; t < n_tasks; ++t) {
          auto& r = results[t % n_seeds];
          r.files.insert(r.files.end(), task_files[t].begin(), task_files[t].end());
          r.seconds += task_seconds[t];
        }
        out.write("noise_compare.csv", render([&](auto& s) {
          s << "snr_db,seed,method,mode_error,dominant_magnitude_rel_error,dominant_distance_rel_error,c_tilde\n";
          for (const auto& r : rows) {
            s << format_double(r.snr) << ',' << r.seed << ",edmd," << format_double(r.edmd_error) << ','
              << format_double(r.edmd_dom.magnitude_rel) << ',' << format_double(r.edmd_dom.distance_rel) << ",0\n";
            s << format_double(r.snr) << ',' << r.seed << ",robust," << format_double(r.robust_error) << ','
              << format_double(r.robust_dom.magnitude_rel) << ',' << format_double(r.robust_dom.distance_rel) << ','
              << format_double(r.c_tilde) << '\n';
          }
        }));
        json per_snr = json::array();
        std::ostringstream summary;
        summary << "snr_db,method,median_mode_error,median_dominant_magnitude_rel_error,"
                   "median_dominant_distance_rel_error,n_seeds\n";
        for (std::size_t k = 0; k < cfg.compare_snr_db.size(); ++k) {
          std::vector<double> ee, er, me, mr, de, dr;
          for (std::size_t s = 0; s < n_seeds; ++s) {
            const auto& r = rows[k * n_seeds + s];
            ee.push_back(r.edmd_error);
            er.push_back(r.robust_error);
            me.push_back(r.edmd_dom.magnitude_rel);
            mr.push_back(r.robust_dom.magnitude_rel);
            de.push_back(r.edmd_dom.distance_rel);
            dr.push_back(r.robust_dom.distance_rel);
          }
          const double snr = cfg.compare_snr_db[k];
          summary << format_double(snr) << ",edmd," << format_double(median(ee)) << ',' << format_double(median(me))
                  << ',' << format_double(median(de)) << ',' << n_seeds << '\n';
          summary << format_double(snr) << ",robust," << format_double(median(er)) << ',' << format_double(median(mr))
                  << ',' << format_double(median(dr)) << ',' << n_seeds << '\n';
          per_snr.push_back({{"snr_db", snr},
                             {"median_mode_error_edmd", median(ee)},
                             {"median_mode_error_robust", median(er)},
                             {"median_dominant_magnitude_rel_error_edmd", median(me)},
                             {"median_dominant_magnitude_rel_error_robust", median(mr)},
                             {"median_dominant_distance_rel_error_edmd", median(de)},
                             {"median_dominant_distance_rel_error_robust", median(dr)}});
        }
        out.write("noise_compare_summary.csv", summary.str());
        manifest.metrics["noise_compare"] = per_snr;
        break;
      }
    }
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      auto files = results[i].files;
      std::sort(files.begin(), files.end());
      manifest.seeds[std::to_string(cfg.seeds[i])] = {
          {"files", files}, {"seconds", results[i].seconds}, {"metrics", results[i].metrics}};
    }
  } catch (const std::exception& e) {
    manifest.status = "FAILED";
    manifest.error = e.what();
    finish();
    throw;
  }
  finish();
  return manifest;
}

}  // namespace robkoop
