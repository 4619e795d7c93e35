#pragma once

#include "robkoop/dictionary.hpp"

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace robkoop {

/// Empirical moments of lifted snapshot pairs:
///   G = (1/M) sum_m Psi(x_m)^T Psi(x_m),  A = (1/M) sum_m Psi(x_m)^T Psi(x_{m+1}).
struct GramPair {
  Eigen::MatrixXd g;
  Eigen::MatrixXd a;
  Eigen::Index n_pairs = 0;

  Eigen::Index size() const { return g.rows(); }
  /// Weighted merge of a partial accumulation over a disjoint set of pairs.
  GramPair& merge(const GramPair& other);
  void validate() const;
};

/// Gram pair over all consecutive rows of a feature matrix (rows = samples).
GramPair build_gram(const Eigen::MatrixXd& features);
/// Gram pair over pairs (m, m+1) for m in [first_pair, first_pair + n_pairs).
GramPair build_gram(const Eigen::MatrixXd& features, Eigen::Index first_pair, Eigen::Index n_pairs);

enum class Estimator { Edmd, Robust };

/// Finite Koopman approximation in row-vector convention: Psi(x_m) K ~ Psi(x_{m+1}).
struct KoopmanModel {
  Eigen::MatrixXd k;
  Dictionary dictionary;
  double dt = 0.01;
  Estimator estimator = Estimator::Edmd;
  double ridge = 0.0;
  double c_tilde = 0.0;  ///< squared-loss Lasso weight (robust only)

  void validate() const;
};

/// K = (G + ridge I)^-1 A. With ridge = 0 a minimum-norm solution is used
/// when G is singular.
KoopmanModel edmd(const GramPair& gram, double ridge, const Dictionary& dictionary, double dt);

struct LassoOptions {
  double tol = 1e-10;          ///< stop when the largest coordinate update in a sweep is below this
  long max_iterations = 100000;
  int polish_every = 10;       ///< sweeps between exact active-set solves; 0 disables
  double gap_tol = 1e-12;      ///< also stop once the duality gap is below gap_tol * 0.5 |a_j|^2
  bool record_history = false; ///< keep the objective after every sweep
};

struct LassoResult {
  Eigen::MatrixXd k;
  std::vector<long> sweeps;                       ///< per column
  double max_duality_gap = 0.0;
  std::vector<std::vector<double>> history;       ///< per column, if requested
};

/// Column-wise  min_k 0.5 |G k - a_j|^2 + c |k|_1  by cyclic coordinate descent
/// with soft-thresholding. Throws NumericalError if a column does not converge.
LassoResult lasso_columns(const Eigen::MatrixXd& g, const Eigen::MatrixXd& a, double c_tilde,
                          const LassoOptions& opts = {}, const Eigen::MatrixXd* warm_start = nullptr);

/// sum_j 0.5 |G k_j - a_j|^2 + c |k_j|_1
double lasso_objective(const Eigen::MatrixXd& g, const Eigen::MatrixXd& a, const Eigen::MatrixXd& k,
                       double c_tilde);

/// Duality gap of one column's Lasso problem at k.
double lasso_duality_gap(const Eigen::MatrixXd& g, const Eigen::VectorXd& a, const Eigen::VectorXd& k,
                         double c_tilde);

/// Smallest c for which the all-zero solution is optimal in every column: max |G^T A|.
double lasso_c_max(const GramPair& gram);

/// Robust (Lasso-regularized) operator: squared-loss surrogate
///   min_K |G K - A|_F^2 + 2 c_tilde sum_k |K_k|_1.
KoopmanModel robust_edmd(const GramPair& gram, double c_tilde, const LassoOptions& opts,
                         const Dictionary& dictionary, double dt, const Eigen::MatrixXd* warm_start = nullptr);

/// Weight c of the unsquared problem |G K - A|_F + c sum |K_k|_1 for which a
/// squared-loss solution at c_tilde is also stationary: c = c_tilde / |G K - A|_F.
double unsquared_regularization(const GramPair& gram, const Eigen::MatrixXd& k, double c_tilde);

/// Worst-case residual of one column under column-wise bounded perturbations
/// |dG_i|_2 <= c:  |G k - a| + c |k|_1.
double robust_column_residual(const Eigen::MatrixXd& g, const Eigen::VectorXd& a, const Eigen::VectorXd& k,
                              double c);

struct CrossValidationOptions {
  int folds = 5;
  int grid_size = 20;
  double grid_min_ratio = 1e-6;  ///< smallest grid value as a fraction of c_max
  LassoOptions lasso;
};

struct CrossValidationResult {
  std::vector<double> grid;    ///< descending from c_max
  std::vector<double> errors;  ///< mean held-out one-step feature error per grid value
  double best = 0.0;
  std::size_t best_index = 0;
  double c_max = 0.0;
};

/// Blocked K-fold selection of c_tilde on one-step feature prediction error
/// |Psi(x_{m+1}) - Psi(x_m) K|^2, with warm starts along the path.
CrossValidationResult cross_validate(const Eigen::MatrixXd& features, const CrossValidationOptions& opts = {});

enum class ModeOrdering {
  Magnitude,     ///< |lambda_d| descending, ties by |Im lambda_c| ascending
  AxisDistance,  ///< |Re lambda_c| ascending, ties by |Im lambda_c| ascending
};

struct Spectrum {
  Eigen::VectorXcd discrete;
  Eigen::VectorXcd continuous;  ///< log(lambda_d) / dt; real part -inf when |lambda_d| < 1e-12
  Eigen::MatrixXcd eigenvectors;
  std::vector<bool> degenerate;
  std::vector<Eigen::Index> dominance_order;  ///< Magnitude ordering over non-degenerate entries
  std::optional<Eigen::Index> constant_mode;  ///< eigenpair of the constant observable
  double dt = 0.01;

  Eigen::Index size() const { return discrete.size(); }
  std::vector<Eigen::Index> order(ModeOrdering ordering) const;
  /// Continuous eigenvalues in the given order, excluding degenerate entries
  /// and the constant observable's mode.
  std::vector<std::complex<double>> modes(ModeOrdering ordering = ModeOrdering::AxisDistance) const;
};

Spectrum spectrum(const KoopmanModel& model);
Spectrum spectrum(const Eigen::MatrixXd& k, double dt, std::optional<Eigen::Index> constant_index = std::nullopt);

/// Continuous-time eigenvalues ln(eig(A)) / dt of a discrete map.
std::vector<std::complex<double>> continuous_eigenvalues(const Eigen::MatrixXd& a, double dt);

/// Sorts eigenvalues by the given ordering (in place copy).
std::vector<std::complex<double>> sorted_modes(std::vector<std::complex<double>> values, ModeOrdering ordering,
                                               double dt);

struct ModeMatch {
  std::complex<double> identified;
  std::complex<double> reference;
  double distance = 0.0;
};

/// Optimal one-to-one matching of the n leading modes of `spec` against the n
/// leading reference eigenvalues (both by AxisDistance ordering).
std::vector<ModeMatch> match_modes(const Spectrum& spec, const std::vector<std::complex<double>>& reference,
                                   Eigen::Index n_dominant);
std::vector<ModeMatch> match_modes(const std::vector<std::complex<double>>& identified,
                                   const std::vector<std::complex<double>>& reference, Eigen::Index n_dominant);

/// Mean matched distance in rad/s.
double mode_error(const Spectrum& spec, const std::vector<std::complex<double>>& reference, Eigen::Index n_dominant);

}  // namespace robkoop
