#pragma once

#include "robkoop/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace robkoop {

enum class DictionaryKind { StatePlusConstant, Monomials, GaussianRBF };

/// Ordered observables psi_1..psi_K and the lift x -> [psi_1(x) .. psi_K(x)].
///
/// Ordering is fixed: the constant first, the n coordinates next, then the
/// remaining observables (higher-degree monomials in graded lexicographic
/// order, or one Gaussian bump per center). Inputs may be shifted and scaled
/// before evaluation, u = (x - offset) / scale; the span of a monomial
/// dictionary is unchanged by that affine map.
class Dictionary {
 public:
  /// Empty placeholder (no observables).
  Dictionary() = default;

  static Dictionary state_plus_constant(Eigen::Index input_dim);
  static Dictionary monomials(Eigen::Index input_dim, int max_degree);
  /// exp(-|u - c|^2 / (2 bandwidth^2)) per center c, appended to [1, u].
  static Dictionary gaussian_rbf(Eigen::MatrixXd centers, double bandwidth);

  /// k-means++ seeded Lloyd centers over the trajectory samples, bandwidth
  /// set to the median pairwise center distance. With `normalize`, the
  /// dictionary is normalized to `traj` and the centers live in those units.
  static Dictionary gaussian_rbf_fit(const Trajectory& traj, Eigen::Index n_centers,
                                     std::uint64_t seed, bool normalize);

  DictionaryKind kind() const { return kind_; }
  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index size() const;
  int max_degree() const { return max_degree_; }
  const Eigen::MatrixXd& centers() const { return centers_; }
  double bandwidth() const { return bandwidth_; }
  const Eigen::VectorXd& offset() const { return offset_; }
  const Eigen::VectorXd& scale() const { return scale_; }

  /// Copy with the given input normalization; scale entries must be positive.
  Dictionary with_normalization(Eigen::VectorXd offset, Eigen::VectorXd scale) const;
  /// Copy normalized by the per-channel mean and standard deviation of `traj`.
  Dictionary normalized_to(const Trajectory& traj) const;

  /// Monomial exponent vectors in lift order (empty for RBF dictionaries).
  const std::vector<std::vector<int>>& exponents() const { return exponents_; }

  Eigen::VectorXd lift(const Eigen::VectorXd& x) const;
  /// Row m is lift(states.row(m)); rejects trajectories with absent entries.
  Eigen::MatrixXd lift_trajectory(const Trajectory& traj) const;
  Eigen::MatrixXd lift_rows(const Eigen::MatrixXd& states) const;

  /// Index of the constant observable (always 0).
  static constexpr Eigen::Index constant_index() { return 0; }
  /// Index of coordinate observable i.
  static Eigen::Index coordinate_index(Eigen::Index i) { return 1 + i; }

  std::string describe() const;

 private:
  void init_normalization();

  DictionaryKind kind_ = DictionaryKind::StatePlusConstant;
  Eigen::Index input_dim_ = 0;
  int max_degree_ = 1;
  std::vector<std::vector<int>> exponents_;
  Eigen::MatrixXd centers_;
  double bandwidth_ = 1.0;
  Eigen::VectorXd offset_;
  Eigen::VectorXd scale_;
};

/// C(n + d, d), the number of monomials of degree <= d in n variables.
Eigen::Index monomial_count(Eigen::Index n, int degree);

}  // namespace robkoop
