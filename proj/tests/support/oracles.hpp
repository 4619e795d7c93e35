#pragma once

// Reference computations used to check the library without reusing its code paths.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Random matrix with spectral radius `radius`.
inline Eigen::MatrixXd random_stable(std::mt19937_64& rng, Eigen::Index n, double radius) {
  Eigen::MatrixXd a = random_matrix(rng, n, n);
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  double rho = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) rho = std::max(rho, std::abs(es.eigenvalues()(i)));
  return a * (radius / rho);
}

/// Least squares through Householder QR of the stacked design: min |X - F C^T|.
inline Eigen::MatrixXd qr_projection(const Eigen::MatrixXd& features, const Eigen::MatrixXd& states) {
  return features.householderQr().solve(states).transpose();
}

/// Minimum over all permutations of sum cost(i, p(i)), by enumeration.
inline double brute_force_assignment(const Eigen::MatrixXd& cost) {
  std::vector<int> p(static_cast<std::size_t>(cost.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += cost(static_cast<Eigen::Index>(i), p[i]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

/// Exact minimum of 0.5 |G k - a|^2 + c |k|_1 for small K: for every sign
/// pattern in {-1, 0, +1}^K solve the stationarity system on the support and
/// keep sign-consistent solutions. The true optimum has some sign pattern, so
/// the best consistent candidate is the global minimum.
inline double lasso_exact_objective(const Eigen::MatrixXd& g, const Eigen::VectorXd& a, double c) {
  const Eigen::Index k = g.cols();
  const Eigen::MatrixXd q = g.transpose() * g;
  const Eigen::VectorXd b = g.transpose() * a;
  double best = 0.5 * a.squaredNorm();
  int patterns = 1;
  for (Eigen::Index i = 0; i < k; ++i) patterns *= 3;
  for (int code = 0; code < patterns; ++code) {
    std::vector<int> sign(static_cast<std::size_t>(k));
    int rest = code;
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < k; ++i) {
      sign[static_cast<std::size_t>(i)] = rest % 3 - 1;
      rest /= 3;
      if (sign[static_cast<std::size_t>(i)] != 0) support.push_back(i);
    }
    if (support.empty()) continue;
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd qs(s, s);
    Eigen::VectorXd rhs(s);
    for (Eigen::Index r = 0; r < s; ++r) {
      rhs(r) = b(support[r]) - c * sign[static_cast<std::size_t>(support[r])];
      for (Eigen::Index t = 0; t < s; ++t) qs(r, t) = q(support[r], support[t]);
    }
    const Eigen::VectorXd xs = qs.fullPivLu().solve(rhs);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
    bool consistent = true;
    for (Eigen::Index r = 0; r < s; ++r) {
      if (xs(r) * sign[static_cast<std::size_t>(support[r])] <= 0.0) consistent = false;
      x(support[r]) = xs(r);
    }
    if (!consistent) continue;
    best = std::min(best, 0.5 * (g * x - a).squaredNorm() + c * x.lpNorm<1>());
  }
  return best;
}

struct KktViolation {
  double nonzero = 0.0;  ///< max |grad + c sign(k)| over nonzero entries
  double zero = 0.0;     ///< max (|grad| - c) over zero entries
};

/// KKT residuals of the column-wise squared-loss Lasso at K.
inline KktViolation lasso_kkt(const Eigen::MatrixXd& g, const Eigen::MatrixXd& a, const Eigen::MatrixXd& k, double c) {
  const Eigen::MatrixXd grad = g.transpose() * (g * k - a);
  KktViolation v;
  v.zero = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < k.cols(); ++j) {
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      if (k(i, j) != 0.0) {
        v.nonzero = std::max(v.nonzero, std::abs(grad(i, j) + c * (k(i, j) > 0.0 ? 1.0 : -1.0)));
      } else {
        v.zero = std::max(v.zero, std::abs(grad(i, j)) - c);
      }
    }
  }
  if (v.zero == -std::numeric_limits<double>::infinity()) v.zero = 0.0;
  return v;
}

/// Central-difference Jacobian of f at x.
template <class F>
Eigen::MatrixXd finite_difference_jacobian(F&& f, const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

/// Eigenvalue lists equal as multisets within tol (greedy nearest matching).
inline bool same_eigenvalues(std::vector<std::complex<double>> a, std::vector<std::complex<double>> b, double tol) {
  if (a.size() != b.size()) return false;
  for (const auto& x : a) {
    auto it = std::min_element(b.begin(), b.end(), [&](const auto& p, const auto& q) {
      return std::abs(p - x) < std::abs(q - x);
    });
    if (std::abs(*it - x) > tol) return false;
    b.erase(it);
  }
  return true;
}

}  // namespace oracle
