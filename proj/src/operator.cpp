#include "robkoop/operator.hpp"

#include "robkoop/assignment.hpp"
#include "robkoop/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace robkoop {

// ---------------------------------------------------------------------------
// Gram pair

GramPair& GramPair::merge(const GramPair& other) {
  if (other.n_pairs == 0) return *this;
  if (n_pairs == 0) {
    *this = other;
    return *this;
  }
  if (other.size() != size()) throw ValidationError("GramPair::merge: size mismatch");
  const double total = static_cast<double>(n_pairs + other.n_pairs);
  const double wa = static_cast<double>(n_pairs) / total;
  const double wb = static_cast<double>(other.n_pairs) / total;
  g = wa * g + wb * other.g;
  a = wa * a + wb * other.a;
  n_pairs += other.n_pairs;
  return *this;
}

void GramPair::validate() const {
  if (n_pairs <= 0 || g.rows() == 0) throw ValidationError("GramPair is empty");
  if (g.rows() != g.cols() || a.rows() != g.rows() || a.cols() != g.cols()) {
    throw ValidationError("GramPair matrices must both be K x K");
  }
  if (!g.allFinite() || !a.allFinite()) throw ValidationError("GramPair has non-finite entries");
}

GramPair build_gram(const Eigen::MatrixXd& features, Eigen::Index first_pair, Eigen::Index n_pairs) {
  if (first_pair < 0 || n_pairs < 0 || first_pair + n_pairs + 1 > features.rows()) {
    if (!(n_pairs == 0 && first_pair >= 0)) throw ValidationError("build_gram: pair range out of bounds");
  }
  GramPair out;
  out.n_pairs = n_pairs;
  const Eigen::Index k = features.cols();
  if (n_pairs == 0) {
    out.g = Eigen::MatrixXd::Zero(k, k);
    out.a = Eigen::MatrixXd::Zero(k, k);
    return out;
  }
  const auto x = features.middleRows(first_pair, n_pairs);
  const auto y = features.middleRows(first_pair + 1, n_pairs);
  const double inv = 1.0 / static_cast<double>(n_pairs);
  out.g = inv * (x.transpose() * x);
  out.g = 0.5 * (out.g + out.g.transpose()).eval();
  out.a = inv * (x.transpose() * y);
  if (!out.g.allFinite() || !out.a.allFinite()) throw ValidationError("build_gram: features are not finite");
  return out;
}

GramPair build_gram(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) {
    throw ValidationError("build_gram: need at least 2 snapshots, got " + std::to_string(features.rows()));
  }
  if (features.cols() == 0) throw ValidationError("build_gram: feature matrix has no columns");
  return build_gram(features, 0, features.rows() - 1);
}

// ---------------------------------------------------------------------------
// Plain EDMD

void KoopmanModel::validate() const {
  if (!(dt > 0.0)) throw ValidationError("KoopmanModel dt must be positive");
  if (k.rows() != k.cols() || k.rows() != dictionary.size()) {
    throw ValidationError("KoopmanModel matrix must be K x K with K the dictionary size");
  }
  if (!k.allFinite()) throw ValidationError("KoopmanModel matrix has non-finite entries");
}

namespace {

double condition_estimate(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0.0;
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

}  // namespace

KoopmanModel edmd(const GramPair& gram, double ridge, const Dictionary& dictionary, double dt) {
  gram.validate();
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ValidationError("edmd: ridge must be non-negative");
  if (gram.size() != dictionary.size()) throw ValidationError("edmd: Gram size does not match the dictionary");
  KoopmanModel model{Eigen::MatrixXd(), dictionary, dt, Estimator::Edmd, ridge, 0.0};
  const Eigen::Index k = gram.size();
  if (ridge > 0.0) {
    const Eigen::MatrixXd lhs = gram.g + ridge * Eigen::MatrixXd::Identity(k, k);
    Eigen::LLT<Eigen::MatrixXd> llt(lhs);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("edmd: G + ridge I is not positive definite (condition estimate " +
                           format_double(condition_estimate(lhs)) + ")");
    }
    model.k = llt.solve(gram.a);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram.g);
    model.k = cod.solve(gram.a);
  }
  if (!model.k.allFinite()) {
    throw NumericalError("edmd: solve produced non-finite entries (condition estimate " +
                         format_double(condition_estimate(gram.g)) + ")");
  }
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// Lasso

namespace {

double soft_threshold(double z, double c) {
  if (z > c) return z - c;
  if (z < -c) return z + c;
  return 0.0;
}

double column_objective(const Eigen::MatrixXd& g, const Eigen::VectorXd& a, const Eigen::VectorXd& k, double c) {
  return 0.5 * (g * k - a).squaredNorm() + c * k.lpNorm<1>();
}

double quad_objective(const Eigen::MatrixXd& q, const Eigen::VectorXd& b, const Eigen::VectorXd& k, double c) {
  return 0.5 * k.dot(q * k) - b.dot(k) + c * k.lpNorm<1>();
}

// Feature-sign active-set search started from the coordinate-descent iterate.
// Each step solves the equality-constrained problem on the current support
// and line-searches over the sign changes, so the objective never increases.
// Returns false (leaving k untouched) if a support block is singular or the
// step budget runs out; the caller then continues with coordinate descent.
bool polish(const Eigen::MatrixXd& q, const Eigen::VectorXd& b, double c, Eigen::VectorXd& k) {
  const Eigen::Index n = k.size();
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  const double slack = 1e-10 * scale;
  Eigen::VectorXd x = k;
  Eigen::VectorXd theta = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  const int budget = static_cast<int>(20 * n + 20);
  for (int step = 0; step < budget; ++step) {
    Eigen::VectorXd grad = q * x - b;
    bool active_optimal = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (theta(i) != 0.0 && std::abs(grad(i) + c * theta(i)) > 1e-9 * scale) active_optimal = false;
    }
    if (active_optimal) {
      Eigen::Index worst = -1;
      double worst_val = c + slack;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (theta(i) == 0.0 && std::abs(grad(i)) > worst_val) {
          worst_val = std::abs(grad(i));
          worst = i;
        }
      }
      if (worst < 0) {
        k = x;
        return true;
      }
      theta(worst) = grad(worst) > 0.0 ? -1.0 : 1.0;
    }

    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (theta(i) != 0.0) active.push_back(i);
    }
    const auto na = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd qa(na, na);
    Eigen::VectorXd rhs(na);
    for (Eigen::Index r = 0; r < na; ++r) {
      rhs(r) = b(active[r]) - c * theta(active[r]);
      for (Eigen::Index s = 0; s < na; ++s) qa(r, s) = q(active[r], active[s]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(qa);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    const Eigen::VectorXd sol = ldlt.solve(rhs);
    if (!sol.allFinite()) return false;
    Eigen::VectorXd target = Eigen::VectorXd::Zero(n);
    for (Eigen::Index r = 0; r < na; ++r) target(active[r]) = sol(r);

    // Candidate points: the full step and every zero crossing along the way.
    Eigen::VectorXd best = target;
    double best_obj = quad_objective(q, b, target, c);
    for (Eigen::Index i : active) {
      if (x(i) != 0.0 && (target(i) == 0.0 || (target(i) > 0.0) != (x(i) > 0.0))) {
        const double t = x(i) / (x(i) - target(i));
        Eigen::VectorXd y = x + t * (target - x);
        y(i) = 0.0;
        const double obj = quad_objective(q, b, y, c);
        if (obj < best_obj) {
          best_obj = obj;
          best = y;
        }
      }
    }
    if (best_obj > quad_objective(q, b, x, c) + 1e-14 * scale) return false;
    x = best;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (theta(i) != 0.0 && (x(i) == 0.0 || (x(i) > 0.0) != (theta(i) > 0.0))) {
        x(i) = 0.0;
        theta(i) = 0.0;
      }
    }
  }
  return false;
}

}  // namespace

double lasso_objective(const Eigen::MatrixXd& g, const Eigen::MatrixXd& a, const Eigen::MatrixXd& k,
                       double c_tilde) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) total += column_objective(g, a.col(j), k.col(j), c_tilde);
  return total;
}

double lasso_duality_gap(const Eigen::MatrixXd& g, const Eigen::VectorXd& a, const Eigen::VectorXd& k,
                         double c_tilde) {
  const Eigen::VectorXd r = a - g * k;
  const double corr = (g.transpose() * r).cwiseAbs().maxCoeff();
  double scale = 1.0;
  if (corr > c_tilde) scale = corr > 0.0 ? c_tilde / corr : 0.0;
  const Eigen::VectorXd theta = scale * r;
  const double primal = 0.5 * r.squaredNorm() + c_tilde * k.lpNorm<1>();
  const double dual = 0.5 * a.squaredNorm() - 0.5 * (a - theta).squaredNorm();
  return std::max(0.0, primal - dual);
}

LassoResult lasso_columns(const Eigen::MatrixXd& g, const Eigen::MatrixXd& a, double c_tilde,
                          const LassoOptions& opts, const Eigen::MatrixXd* warm_start) {
  if (!(c_tilde >= 0.0) || !std::isfinite(c_tilde)) {
    throw ValidationError("lasso: regularization weight must be a non-negative number");
  }
  if (g.rows() != g.cols() || a.rows() != g.rows()) throw ValidationError("lasso: shape mismatch");
  if (warm_start && (warm_start->rows() != g.cols() || warm_start->cols() != a.cols())) {
    throw ValidationError("lasso: warm start has wrong shape");
  }
  const Eigen::Index n = g.cols();
  const Eigen::MatrixXd q = g.transpose() * g;
  const Eigen::MatrixXd bmat = g.transpose() * a;

  LassoResult result;
  result.k = warm_start ? *warm_start : Eigen::MatrixXd::Zero(n, a.cols());
  result.sweeps.assign(static_cast<std::size_t>(a.cols()), 0);
  if (opts.record_history) result.history.resize(static_cast<std::size_t>(a.cols()));

  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    Eigen::VectorXd k = result.k.col(j);
    const Eigen::VectorXd b = bmat.col(j);
    Eigen::VectorXd grad = q * k - b;
    auto* hist = opts.record_history ? &result.history[static_cast<std::size_t>(j)] : nullptr;
    if (hist) hist->push_back(column_objective(g, a.col(j), k, c_tilde));

    const double gap_limit = opts.gap_tol * 0.5 * a.col(j).squaredNorm();
    const long check_every = opts.polish_every > 0 ? opts.polish_every : 10;
    bool converged = false;
    long sweep = 0;
    while (!converged && sweep < opts.max_iterations) {
      ++sweep;
      double max_delta = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double qii = q(i, i);
        double next = 0.0;
        if (qii > 0.0) next = soft_threshold(qii * k(i) - grad(i), c_tilde) / qii;
        const double delta = next - k(i);
        if (delta != 0.0) {
          grad += q.col(i) * delta;
          k(i) = next;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      if (hist) hist->push_back(column_objective(g, a.col(j), k, c_tilde));
      if (max_delta < opts.tol) {
        converged = true;
      } else if (opts.polish_every > 0 && sweep % opts.polish_every == 0 && polish(q, b, c_tilde, k)) {
        grad = q * k - b;
        if (hist) hist->push_back(column_objective(g, a.col(j), k, c_tilde));
        converged = true;
      } else if (sweep % check_every == 0 && lasso_duality_gap(g, a.col(j), k, c_tilde) <= gap_limit) {
        // flat directions of an ill-conditioned G keep coordinates moving long
        // after the objective is certified optimal
        converged = true;
      }
    }
    if (!converged && c_tilde == 0.0) {
      // without the penalty the problem is plain least squares; on a numerically
      // singular G^T G coordinate descent stalls, so take the minimum-norm solve
      k = g.completeOrthogonalDecomposition().solve(a.col(j));
      if (hist) hist->push_back(column_objective(g, a.col(j), k, c_tilde));
      converged = k.allFinite();
    }
    const double gap = lasso_duality_gap(g, a.col(j), k, c_tilde);
    if (!converged) {
      throw NumericalError("lasso: column " + std::to_string(j) + " did not converge in " +
                           std::to_string(opts.max_iterations) + " sweeps (duality gap " + format_double(gap) +
                           ")");
    }
    result.k.col(j) = k;
    result.sweeps[static_cast<std::size_t>(j)] = sweep;
    result.max_duality_gap = std::max(result.max_duality_gap, gap);
  }
  return result;
}

double lasso_c_max(const GramPair& gram) {
  gram.validate();
  return (gram.g.transpose() * gram.a).cwiseAbs().maxCoeff();
}

KoopmanModel robust_edmd(const GramPair& gram, double c_tilde, const LassoOptions& opts,
                         const Dictionary& dictionary, double dt, const Eigen::MatrixXd* warm_start) {
  gram.validate();
  if (!(c_tilde >= 0.0)) throw ValidationError("robust_edmd: regularization c must be non-negative");
  if (gram.size() != dictionary.size()) {
    throw ValidationError("robust_edmd: Gram size does not match the dictionary");
  }
  LassoResult res = lasso_columns(gram.g, gram.a, c_tilde, opts, warm_start);
  KoopmanModel model{std::move(res.k), dictionary, dt, Estimator::Robust, 0.0, c_tilde};
  model.validate();
  return model;
}

double unsquared_regularization(const GramPair& gram, const Eigen::MatrixXd& k, double c_tilde) {
  const double r = (gram.g * k - gram.a).norm();
  return r > 0.0 ? c_tilde / r : std::numeric_limits<double>::infinity();
}

double robust_column_residual(const Eigen::MatrixXd& g, const Eigen::VectorXd& a, const Eigen::VectorXd& k,
                              double c) {
  return (g * k - a).norm() + c * k.lpNorm<1>();
}

// ---------------------------------------------------------------------------
// Cross-validation

CrossValidationResult cross_validate(const Eigen::MatrixXd& features, const CrossValidationOptions& opts) {
  if (opts.folds < 2) throw ValidationError("cross_validate: need at least 2 folds");
  if (opts.grid_size < 1) throw ValidationError("cross_validate: grid_size must be positive");
  if (!(opts.grid_min_ratio > 0.0 && opts.grid_min_ratio <= 1.0)) {
    throw ValidationError("cross_validate: grid_min_ratio must lie in (0, 1]");
  }
  const GramPair full = build_gram(features);
  const Eigen::Index m = full.n_pairs;
  if (m < opts.folds) throw ValidationError("cross_validate: fewer snapshot pairs than folds");

  CrossValidationResult out;
  out.c_max = lasso_c_max(full);
  for (int i = 0; i < opts.grid_size; ++i) {
    const double frac = opts.grid_size == 1 ? 0.0 : static_cast<double>(i) / (opts.grid_size - 1);
    out.grid.push_back(out.c_max * std::pow(opts.grid_min_ratio, frac));
  }
  out.errors.assign(out.grid.size(), 0.0);

  for (int f = 0; f < opts.folds; ++f) {
    const Eigen::Index begin = m * f / opts.folds;
    const Eigen::Index end = m * (f + 1) / opts.folds;
    GramPair train = build_gram(features, 0, begin);
    train.merge(build_gram(features, end, m - end));
    const auto xv = features.middleRows(begin, end - begin);
    const auto yv = features.middleRows(begin + 1, end - begin);
    Eigen::MatrixXd warm = Eigen::MatrixXd::Zero(features.cols(), features.cols());
    for (std::size_t c = 0; c < out.grid.size(); ++c) {
      warm = lasso_columns(train.g, train.a, out.grid[c], opts.lasso, &warm).k;
      const double err = (yv - xv * warm).rowwise().squaredNorm().mean();
      out.errors[c] += err / opts.folds;
    }
  }
  out.best_index = static_cast<std::size_t>(
      std::min_element(out.errors.begin(), out.errors.end()) - out.errors.begin());
  out.best = out.grid[out.best_index];
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum

namespace {

bool mode_less(const std::complex<double>& x, const std::complex<double>& y, ModeOrdering ordering) {
  if (ordering == ModeOrdering::Magnitude) {
    if (x.real() != y.real()) return x.real() > y.real();
  } else {
    if (std::abs(x.real()) != std::abs(y.real())) return std::abs(x.real()) < std::abs(y.real());
  }
  if (std::abs(x.imag()) != std::abs(y.imag())) return std::abs(x.imag()) < std::abs(y.imag());
  return x.imag() > y.imag();
}

}  // namespace

std::vector<Eigen::Index> Spectrum::order(ModeOrdering ordering) const {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (!degenerate[static_cast<std::size_t>(i)]) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index p, Eigen::Index q) {
    if (ordering == ModeOrdering::Magnitude) {
      const double mp = std::abs(discrete(p));
      const double mq = std::abs(discrete(q));
      if (mp != mq) return mp > mq;
      const double ip = std::abs(continuous(p).imag());
      const double iq = std::abs(continuous(q).imag());
      if (ip != iq) return ip < iq;
      return continuous(p).imag() > continuous(q).imag();
    }
    return mode_less(continuous(p), continuous(q), ordering);
  });
  return idx;
}

std::vector<std::complex<double>> Spectrum::modes(ModeOrdering ordering) const {
  std::vector<std::complex<double>> out;
  for (auto i : order(ordering)) {
    if (constant_mode && *constant_mode == i) continue;
    out.push_back(continuous(i));
  }
  return out;
}

Spectrum spectrum(const Eigen::MatrixXd& k, double dt, std::optional<Eigen::Index> constant_index) {
  if (!(dt > 0.0)) throw ValidationError("spectrum: dt must be positive");
  if (k.rows() != k.cols() || k.rows() == 0) throw ValidationError("spectrum: matrix must be square");
  if (!k.allFinite()) throw ValidationError("spectrum: matrix has non-finite entries");
  Eigen::EigenSolver<Eigen::MatrixXd> es(k, true);
  if (es.info() != Eigen::Success) throw NumericalError("spectrum: eigensolver failed");

  Spectrum s;
  s.dt = dt;
  s.discrete = es.eigenvalues();
  s.eigenvectors = es.eigenvectors();
  s.continuous.resize(s.discrete.size());
  s.degenerate.assign(static_cast<std::size_t>(s.discrete.size()), false);
  for (Eigen::Index i = 0; i < s.discrete.size(); ++i) {
    if (std::abs(s.discrete(i)) < 1e-12) {
      s.degenerate[static_cast<std::size_t>(i)] = true;
      s.continuous(i) = {-std::numeric_limits<double>::infinity(), 0.0};
    } else {
      s.continuous(i) = std::log(s.discrete(i)) / dt;
    }
  }
  s.dominance_order = s.order(ModeOrdering::Magnitude);
  if (constant_index) {
    double best = -1.0;
    for (auto i : s.dominance_order) {
      const double weight = std::abs(s.eigenvectors(*constant_index, i)) / s.eigenvectors.col(i).norm();
      if (weight > best) {
        best = weight;
        s.constant_mode = i;
      }
    }
  }
  return s;
}

Spectrum spectrum(const KoopmanModel& model) {
  model.validate();
  return spectrum(model.k, model.dt, Dictionary::constant_index());
}

std::vector<std::complex<double>> continuous_eigenvalues(const Eigen::MatrixXd& a, double dt) {
  if (!(dt > 0.0)) throw ValidationError("continuous_eigenvalues: dt must be positive");
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  if (es.info() != Eigen::Success) throw NumericalError("continuous_eigenvalues: eigensolver failed");
  std::vector<std::complex<double>> out;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(std::log(es.eigenvalues()(i)) / dt);
  return out;
}

std::vector<std::complex<double>> sorted_modes(std::vector<std::complex<double>> values, ModeOrdering ordering,
                                               double /*dt*/) {
  std::stable_sort(values.begin(), values.end(),
                   [&](const auto& x, const auto& y) { return mode_less(x, y, ordering); });
  return values;
}

std::vector<ModeMatch> match_modes(const std::vector<std::complex<double>>& identified,
                                   const std::vector<std::complex<double>>& reference, Eigen::Index n_dominant) {
  if (identified.empty() || reference.empty()) throw ValidationError("mode_error: empty eigenvalue list");
  if (n_dominant < 1) throw ValidationError("mode_error: n_dominant must be positive");
  if (n_dominant > static_cast<Eigen::Index>(identified.size()) ||
      n_dominant > static_cast<Eigen::Index>(reference.size())) {
    throw ValidationError("mode_error: n_dominant = " + std::to_string(n_dominant) + " exceeds the " +
                          std::to_string(identified.size()) + " identified / " +
                          std::to_string(reference.size()) + " reference modes");
  }
  const auto ident = sorted_modes(identified, ModeOrdering::AxisDistance, 1.0);
  const auto ref = sorted_modes(reference, ModeOrdering::AxisDistance, 1.0);
  Eigen::MatrixXd cost(n_dominant, n_dominant);
  for (Eigen::Index i = 0; i < n_dominant; ++i) {
    for (Eigen::Index j = 0; j < n_dominant; ++j) {
      cost(i, j) = std::abs(ident[static_cast<std::size_t>(i)] - ref[static_cast<std::size_t>(j)]);
    }
  }
  if (!cost.allFinite()) throw ValidationError("mode_error: non-finite eigenvalues among the leading modes");
  const auto assignment = min_cost_assignment(cost);
  std::vector<ModeMatch> out;
  for (Eigen::Index i = 0; i < n_dominant; ++i) {
    const auto j = assignment[static_cast<std::size_t>(i)];
    out.push_back({ident[static_cast<std::size_t>(i)], ref[static_cast<std::size_t>(j)], cost(i, j)});
  }
  return out;
}

std::vector<ModeMatch> match_modes(const Spectrum& spec, const std::vector<std::complex<double>>& reference,
                                   Eigen::Index n_dominant) {
  return match_modes(spec.modes(ModeOrdering::AxisDistance), reference, n_dominant);
}

double mode_error(const Spectrum& spec, const std::vector<std::complex<double>>& reference, Eigen::Index n_dominant) {
  const auto matches = match_modes(spec, reference, n_dominant);
  double total = 0.0;
  for (const auto& m : matches) total += m.distance;
  return total / static_cast<double>(matches.size());
}

}  // namespace robkoop
