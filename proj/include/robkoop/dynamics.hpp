#pragma once

#include "robkoop/trajectory.hpp"

#include <Eigen/Dense>

#include <variant>
#include <vector>

namespace robkoop {

enum class ModelKind { LinearMap, VanDerPol, SwingNetwork };

/// Discrete-time map x+ = A x.
struct LinearMapParams {
  Eigen::MatrixXd a;
};

/// x1' = x2, x2' = mu (1 - x1^2) x2 - x1.
struct VanDerPolParams {
  double mu = 1.0;
};

/// Classical multi-machine swing network reduced to generator internal nodes.
///
/// State layout is [delta_1..delta_n, omega_1..omega_n] with rotor angles in
/// radians and omega the per-unit speed deviation. Dynamics:
///
///   delta_i' = 2 pi f0 omega_i
///   M_i omega_i' = Pm_i - Pe_i(delta) - D_i omega_i
///   Pe_i = sum_j E_i E_j (G_ij cos(d_i - d_j) + B_ij sin(d_i - d_j))
///          + E_i V_ref (G_i,ref cos d_i + B_i,ref sin d_i)
///
/// `y_ref` holds the mutual admittances Y_i,ref to an optional stiff reference
/// bus at angle zero; leave it empty for a network without one.
struct SwingNetworkParams {
  Eigen::VectorXd inertia;     ///< M_i = 2 H_i, seconds
  Eigen::VectorXd damping;     ///< D_i, per unit
  Eigen::VectorXd emf;         ///< E_i, per unit
  Eigen::VectorXd mech_power;  ///< Pm_i, per unit
  Eigen::MatrixXcd y_bus;      ///< reduced admittance among internal nodes
  Eigen::VectorXcd y_ref;      ///< mutual admittance to the reference bus, or empty
  double v_ref = 1.0;
  double base_frequency_hz = 60.0;

  Eigen::Index n_generators() const { return inertia.size(); }
  bool has_reference_bus() const { return y_ref.size() > 0; }

  /// Electrical power injections Pe(delta).
  Eigen::VectorXd electrical_power(const Eigen::VectorXd& angles) const;

  /// Copy whose mechanical powers make `angles` (with zero speed) an equilibrium.
  SwingNetworkParams balanced_at(const Eigen::VectorXd& angles) const;
};

/// Temporary scaling of one internal node's admittance row and column.
struct FaultEvent {
  double apply_time = 0.0;
  double clear_time = 0.0;
  Eigen::Index target_bus = 0;
  double admittance_scale = 0.0;

  bool active_at(double t) const { return t >= apply_time && t < clear_time; }
  void validate() const;
};

class DynamicsModel {
 public:
  static DynamicsModel linear_map(Eigen::MatrixXd a);
  static DynamicsModel van_der_pol(double mu);
  static DynamicsModel swing_network(SwingNetworkParams params);

  ModelKind kind() const;
  Eigen::Index state_dim() const;
  bool is_continuous() const { return kind() != ModelKind::LinearMap; }

  const LinearMapParams& linear_map_params() const;
  const VanDerPolParams& van_der_pol_params() const;
  const SwingNetworkParams& swing_params() const;

  /// Right-hand side of the ODE with the given faults applied (continuous models only).
  Eigen::VectorXd vector_field(const Eigen::VectorXd& x,
                               const std::vector<FaultEvent>& active_faults = {}) const;

  /// Analytic state Jacobian: df/dx for continuous models, A for LinearMap.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;

  /// Fixed-point residual: f(x) for continuous models, A x - x for LinearMap.
  Eigen::VectorXd equilibrium_residual(const Eigen::VectorXd& x) const;

 private:
  explicit DynamicsModel(std::variant<LinearMapParams, VanDerPolParams, SwingNetworkParams> p);
  std::variant<LinearMapParams, VanDerPolParams, SwingNetworkParams> params_;
};

struct SimulationOptions {
  int substeps = 1;  ///< RK4 steps per sample interval
  double t0 = 0.0;
};

/// Runs the model for n_steps sample intervals of length dt (n_steps + 1 samples).
/// Continuous models use fixed-step RK4, splitting intervals at fault switching times.
Trajectory simulate(const DynamicsModel& model, const Eigen::VectorXd& x0, double dt,
                    Eigen::Index n_steps, const std::vector<FaultEvent>& faults = {},
                    const SimulationOptions& opts = {});

/// Discrete-time Jacobian of the dt-flow map at an equilibrium: expm(J dt), or A for LinearMap.
Eigen::MatrixXd linearize(const DynamicsModel& model, const Eigen::VectorXd& x_eq, double dt);

struct EquilibriumOptions {
  double tol = 1e-10;
  int max_iterations = 50;
};

/// Newton iteration with minimum-norm steps, so networks without a reference
/// bus (singular Jacobian along the common-angle direction) still converge.
Eigen::VectorXd equilibrium(const DynamicsModel& model, const Eigen::VectorXd& guess,
                            const EquilibriumOptions& opts = {});

/// The three-machine benchmark network used by the experiment configs.
/// Machines are tied to each other and to a stiff reference bus; the
/// equilibrium angles are (0.30, 0.45, 0.50) rad.
SwingNetworkParams benchmark_swing_network();

/// omega = 2 pi f0 (1 + omega_pu), the absolute rotor speed in rad/s.
double angular_speed(double speed_deviation_pu, double base_frequency_hz = 60.0);

/// Same trajectory with swing speed channels expressed as absolute speed in rad/s.
Trajectory with_angular_speed(const Trajectory& traj, const SwingNetworkParams& params);

}  // namespace robkoop
