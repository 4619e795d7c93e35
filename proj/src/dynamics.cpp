#include "robkoop/dynamics.hpp"

#include "robkoop/error.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace robkoop {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

void validate_swing(const SwingNetworkParams& p) {
  const auto n = p.inertia.size();
  require(n > 0, "swing network needs at least one generator");
  require(p.damping.size() == n && p.emf.size() == n && p.mech_power.size() == n,
          "swing network parameter vectors must all have n_generators entries");
  require(p.y_bus.rows() == n && p.y_bus.cols() == n, "swing network y_bus must be n x n");
  require(p.y_ref.size() == 0 || p.y_ref.size() == n, "swing network y_ref must be empty or length n");
  require((p.inertia.array() > 0.0).all(), "swing network inertia must be strictly positive");
  require((p.damping.array() > 0.0).all(), "swing network damping must be strictly positive");
  require(p.base_frequency_hz > 0.0, "swing network base frequency must be positive");
  require(p.inertia.allFinite() && p.damping.allFinite() && p.emf.allFinite() &&
              p.mech_power.allFinite() && p.y_bus.allFinite() && p.y_ref.allFinite(),
          "swing network parameters must be finite");
}

// Network admittances with the active faults' row/column scaling applied.
struct Network {
  Eigen::MatrixXcd y_bus;
  Eigen::VectorXcd y_ref;
};

Network faulted_network(const SwingNetworkParams& p, const std::vector<FaultEvent>& faults) {
  Network net{p.y_bus, p.y_ref};
  for (const auto& f : faults) {
    const auto b = f.target_bus;
    net.y_bus.row(b) *= f.admittance_scale;
    net.y_bus.col(b) *= f.admittance_scale;
    // diagonal was scaled twice
    if (f.admittance_scale != 0.0) net.y_bus(b, b) /= f.admittance_scale;
    if (net.y_ref.size() > 0) net.y_ref(b) *= f.admittance_scale;
  }
  return net;
}

Eigen::VectorXd electrical_power(const SwingNetworkParams& p, const Network& net,
                                 const Eigen::VectorXd& angles) {
  const auto n = p.n_generators();
  Eigen::VectorXd pe = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = angles(i) - angles(j);
      acc += p.emf(j) * (net.y_bus(i, j).real() * std::cos(d) + net.y_bus(i, j).imag() * std::sin(d));
    }
    if (net.y_ref.size() > 0) {
      acc += p.v_ref * (net.y_ref(i).real() * std::cos(angles(i)) +
                        net.y_ref(i).imag() * std::sin(angles(i)));
    }
    pe(i) = p.emf(i) * acc;
  }
  return pe;
}

Eigen::VectorXd swing_field(const SwingNetworkParams& p, const Network& net, const Eigen::VectorXd& x) {
  const auto n = p.n_generators();
  const double ws = 2.0 * std::numbers::pi * p.base_frequency_hz;
  const Eigen::VectorXd angles = x.head(n);
  const Eigen::VectorXd speed = x.tail(n);
  Eigen::VectorXd f(2 * n);
  f.head(n) = ws * speed;
  f.tail(n) = ((p.mech_power - electrical_power(p, net, angles) - p.damping.cwiseProduct(speed)).array() /
               p.inertia.array())
                  .matrix();
  return f;
}

Eigen::MatrixXd swing_jacobian(const SwingNetworkParams& p, const Eigen::VectorXd& x) {
  const auto n = p.n_generators();
  const double ws = 2.0 * std::numbers::pi * p.base_frequency_hz;
  // dPe/ddelta
  Eigen::MatrixXd dpe = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = x(i) - x(j);
      const double g = p.y_bus(i, j).real();
      const double b = p.y_bus(i, j).imag();
      const double term = p.emf(i) * p.emf(j) * (-g * std::sin(d) + b * std::cos(d));
      dpe(i, i) += term;
      dpe(i, j) -= term;
    }
    if (p.has_reference_bus()) {
      const double g = p.y_ref(i).real();
      const double b = p.y_ref(i).imag();
      dpe(i, i) += p.emf(i) * p.v_ref * (-g * std::sin(x(i)) + b * std::cos(x(i)));
    }
  }
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  jac.topRightCorner(n, n) = ws * Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    jac.block(n + i, 0, 1, n) = -dpe.row(i) / p.inertia(i);
    jac(n + i, n + i) = -p.damping(i) / p.inertia(i);
  }
  return jac;
}

}  // namespace

Eigen::VectorXd SwingNetworkParams::electrical_power(const Eigen::VectorXd& angles) const {
  return robkoop::electrical_power(*this, Network{y_bus, y_ref}, angles);
}

SwingNetworkParams SwingNetworkParams::balanced_at(const Eigen::VectorXd& angles) const {
  require(angles.size() == n_generators(), "balanced_at: angle vector has wrong length");
  SwingNetworkParams out = *this;
  out.mech_power = electrical_power(angles);
  return out;
}

void FaultEvent::validate() const {
  require(std::isfinite(apply_time) && std::isfinite(clear_time), "fault times must be finite");
  require(apply_time >= 0.0 && apply_time < clear_time,
          "fault must satisfy 0 <= apply_time < clear_time");
  require(admittance_scale >= 0.0 && std::isfinite(admittance_scale), "fault admittance_scale must be >= 0");
}

DynamicsModel::DynamicsModel(std::variant<LinearMapParams, VanDerPolParams, SwingNetworkParams> p)
    : params_(std::move(p)) {}

DynamicsModel DynamicsModel::linear_map(Eigen::MatrixXd a) {
  require(a.rows() > 0 && a.rows() == a.cols(), "LinearMap matrix must be square and non-empty");
  require(a.allFinite(), "LinearMap matrix must be finite");
  return DynamicsModel(LinearMapParams{std::move(a)});
}

DynamicsModel DynamicsModel::van_der_pol(double mu) {
  require(std::isfinite(mu), "VanDerPol mu must be finite");
  return DynamicsModel(VanDerPolParams{mu});
}

DynamicsModel DynamicsModel::swing_network(SwingNetworkParams params) {
  validate_swing(params);
  return DynamicsModel(std::move(params));
}

ModelKind DynamicsModel::kind() const {
  return static_cast<ModelKind>(params_.index());
}

Eigen::Index DynamicsModel::state_dim() const {
  switch (kind()) {
    case ModelKind::LinearMap: return linear_map_params().a.rows();
    case ModelKind::VanDerPol: return 2;
    case ModelKind::SwingNetwork: return 2 * swing_params().n_generators();
  }
  return 0;
}

const LinearMapParams& DynamicsModel::linear_map_params() const {
  return std::get<LinearMapParams>(params_);
}
const VanDerPolParams& DynamicsModel::van_der_pol_params() const {
  return std::get<VanDerPolParams>(params_);
}
const SwingNetworkParams& DynamicsModel::swing_params() const {
  return std::get<SwingNetworkParams>(params_);
}

Eigen::VectorXd DynamicsModel::vector_field(const Eigen::VectorXd& x,
                                            const std::vector<FaultEvent>& active_faults) const {
  switch (kind()) {
    case ModelKind::LinearMap:
      throw ValidationError("LinearMap is discrete-time and has no vector field");
    case ModelKind::VanDerPol: {
      const double mu = van_der_pol_params().mu;
      Eigen::VectorXd f(2);
      f << x(1), mu * (1.0 - x(0) * x(0)) * x(1) - x(0);
      return f;
    }
    case ModelKind::SwingNetwork: {
      const auto& p = swing_params();
      return swing_field(p, faulted_network(p, active_faults), x);
    }
  }
  return {};
}

Eigen::MatrixXd DynamicsModel::jacobian(const Eigen::VectorXd& x) const {
  require(x.size() == state_dim(), "jacobian: state has wrong dimension");
  switch (kind()) {
    case ModelKind::LinearMap: return linear_map_params().a;
    case ModelKind::VanDerPol: {
      const double mu = van_der_pol_params().mu;
      Eigen::MatrixXd j(2, 2);
      j << 0.0, 1.0, -2.0 * mu * x(0) * x(1) - 1.0, mu * (1.0 - x(0) * x(0));
      return j;
    }
    case ModelKind::SwingNetwork: return swing_jacobian(swing_params(), x);
  }
  return {};
}

Eigen::VectorXd DynamicsModel::equilibrium_residual(const Eigen::VectorXd& x) const {
  require(x.size() == state_dim(), "equilibrium_residual: state has wrong dimension");
  if (kind() == ModelKind::LinearMap) return linear_map_params().a * x - x;
  return vector_field(x);
}

namespace {

Eigen::VectorXd rk4_step(const DynamicsModel& model, const std::vector<FaultEvent>& active,
                         const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd k1 = model.vector_field(x, active);
  const Eigen::VectorXd k2 = model.vector_field(x + 0.5 * h * k1, active);
  const Eigen::VectorXd k3 = model.vector_field(x + 0.5 * h * k2, active);
  const Eigen::VectorXd k4 = model.vector_field(x + h * k3, active);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<FaultEvent> active_faults(const std::vector<FaultEvent>& faults, double t) {
  std::vector<FaultEvent> out;
  for (const auto& f : faults) {
    if (f.active_at(t)) out.push_back(f);
  }
  return out;
}

}  // namespace

Trajectory simulate(const DynamicsModel& model, const Eigen::VectorXd& x0, double dt,
                    Eigen::Index n_steps, const std::vector<FaultEvent>& faults,
                    const SimulationOptions& opts) {
  require(x0.size() == model.state_dim(), "simulate: x0 has dimension " + std::to_string(x0.size()) +
                                              ", model expects " + std::to_string(model.state_dim()));
  require(x0.allFinite(), "simulate: x0 must be finite");
  require(dt > 0.0 && std::isfinite(dt), "simulate: dt must be positive");
  require(n_steps >= 0, "simulate: n_steps must be non-negative");
  require(opts.substeps >= 1, "simulate: substeps must be >= 1");
  if (!faults.empty() && model.kind() != ModelKind::SwingNetwork) {
    throw ValidationError("simulate: faults are only valid for SwingNetwork models");
  }
  for (const auto& f : faults) {
    f.validate();
    if (f.target_bus < 0 || f.target_bus >= model.swing_params().n_generators()) {
      throw ValidationError("simulate: fault references bus " + std::to_string(f.target_bus) +
                            " but the network has " +
                            std::to_string(model.swing_params().n_generators()) + " generators");
    }
  }

  Eigen::MatrixXd states(n_steps + 1, model.state_dim());
  states.row(0) = x0.transpose();
  Eigen::VectorXd x = x0;
  const auto& a = model.kind() == ModelKind::LinearMap ? model.linear_map_params().a : Eigen::MatrixXd();

  for (Eigen::Index k = 0; k < n_steps; ++k) {
    const double t_begin = opts.t0 + static_cast<double>(k) * dt;
    const double t_end = opts.t0 + static_cast<double>(k + 1) * dt;
    if (model.kind() == ModelKind::LinearMap) {
      x = a * x;
    } else {
      std::vector<double> cuts{t_begin};
      for (const auto& f : faults) {
        for (double s : {f.apply_time, f.clear_time}) {
          if (s > t_begin && s < t_end) cuts.push_back(s);
        }
      }
      std::sort(cuts.begin(), cuts.end());
      cuts.push_back(t_end);
      for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const double span = cuts[c + 1] - cuts[c];
        if (span <= 0.0) continue;
        const auto active = active_faults(faults, 0.5 * (cuts[c] + cuts[c + 1]));
        const double h = span / opts.substeps;
        for (int s = 0; s < opts.substeps; ++s) x = rk4_step(model, active, x, h);
      }
    }
    if (!x.allFinite()) {
      throw NumericalError("simulate: non-finite state at step " + std::to_string(k + 1) +
                           " (t = " + format_double(t_end) + ")");
    }
    states.row(k + 1) = x.transpose();
  }
  return Trajectory(opts.t0, dt, std::move(states));
}

Eigen::MatrixXd linearize(const DynamicsModel& model, const Eigen::VectorXd& x_eq, double dt) {
  require(x_eq.size() == model.state_dim(), "linearize: x_eq has wrong dimension");
  require(dt > 0.0, "linearize: dt must be positive");
  if (model.kind() == ModelKind::LinearMap) return model.linear_map_params().a;
  const double residual = model.equilibrium_residual(x_eq).norm();
  if (!(residual < 1e-8)) {
    throw ValidationError("linearize: x_eq is not an equilibrium (vector-field norm " +
                          format_double(residual) + ")");
  }
  const Eigen::MatrixXd scaled = model.jacobian(x_eq) * dt;
  return scaled.exp();
}

Eigen::VectorXd equilibrium(const DynamicsModel& model, const Eigen::VectorXd& guess,
                            const EquilibriumOptions& opts) {
  require(guess.size() == model.state_dim(), "equilibrium: guess has wrong dimension");
  require(guess.allFinite(), "equilibrium: guess must be finite");
  Eigen::VectorXd x = guess;
  const Eigen::Index n = model.state_dim();
  double residual = model.equilibrium_residual(x).norm();
  for (int it = 0; it < opts.max_iterations && !(residual < opts.tol); ++it) {
    Eigen::MatrixXd jac = model.jacobian(x);
    if (model.kind() == ModelKind::LinearMap) jac -= Eigen::MatrixXd::Identity(n, n);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jac);
    x -= cod.solve(model.equilibrium_residual(x));
    residual = model.equilibrium_residual(x).norm();
    if (!std::isfinite(residual)) break;
  }
  if (!(residual < opts.tol)) {
    throw NumericalError("equilibrium: Newton did not converge in " +
                         std::to_string(opts.max_iterations) + " iterations (last residual " +
                         format_double(residual) + ")");
  }
  return x;
}

SwingNetworkParams benchmark_swing_network() {
  SwingNetworkParams p;
  const Eigen::Vector3d h(23.64, 6.4, 3.01);
  p.inertia = 2.0 * h;
  p.damping = Eigen::Vector3d(25.0, 12.0, 12.0);
  p.emf = Eigen::Vector3d(1.05, 1.02, 1.02);

  Eigen::Matrix3d b;
  b << 0.0, 1.5, 1.2,
       1.5, 0.0, 1.8,
       1.2, 1.8, 0.0;
  const Eigen::Vector3d b_ref(3.0, 1.0, 1.0);
  for (int i = 0; i < 3; ++i) b(i, i) = -(b.row(i).sum() + b_ref(i));
  p.y_bus = std::complex<double>(0.0, 1.0) * b.cast<std::complex<double>>();
  p.y_ref = std::complex<double>(0.0, 1.0) * b_ref.cast<std::complex<double>>();
  p.mech_power = Eigen::Vector3d::Zero();
  return p.balanced_at(Eigen::Vector3d(0.30, 0.45, 0.50));
}

double angular_speed(double speed_deviation_pu, double base_frequency_hz) {
  return 2.0 * std::numbers::pi * base_frequency_hz * (1.0 + speed_deviation_pu);
}

Trajectory with_angular_speed(const Trajectory& traj, const SwingNetworkParams& params) {
  const auto n = params.n_generators();
  require(traj.dim() == 2 * n, "with_angular_speed: trajectory does not match the network");
  Trajectory out = traj;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    for (Eigen::Index i = n; i < 2 * n; ++i) {
      if (!is_absent(out.states(k, i))) {
        out.states(k, i) = angular_speed(out.states(k, i), params.base_frequency_hz);
      }
    }
  }
  return out;
}

}  // namespace robkoop
