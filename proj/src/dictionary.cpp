#include "robkoop/dictionary.hpp"

#include "robkoop/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace robkoop {

Eigen::Index monomial_count(Eigen::Index n, int degree) {
  // C(n + d, d) computed incrementally to stay exact.
  Eigen::Index c = 1;
  for (int k = 1; k <= degree; ++k) c = c * (n + k) / k;
  return c;
}

namespace {

// Exponent vectors of all monomials of degree <= max_degree, graded lexicographic.
std::vector<std::vector<int>> graded_lex_exponents(Eigen::Index n, int max_degree) {
  std::vector<std::vector<int>> out;
  for (int d = 0; d <= max_degree; ++d) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(d), 0);
    while (true) {
      std::vector<int> e(static_cast<std::size_t>(n), 0);
      for (auto i : idx) ++e[static_cast<std::size_t>(i)];
      out.push_back(std::move(e));
      // next nondecreasing sequence
      int pos = d - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - 1) --pos;
      if (pos < 0) break;
      const auto v = idx[static_cast<std::size_t>(pos)] + 1;
      for (int q = pos; q < d; ++q) idx[static_cast<std::size_t>(q)] = v;
    }
  }
  return out;
}

}  // namespace

void Dictionary::init_normalization() {
  offset_ = Eigen::VectorXd::Zero(input_dim_);
  scale_ = Eigen::VectorXd::Ones(input_dim_);
}

Dictionary Dictionary::state_plus_constant(Eigen::Index input_dim) {
  if (input_dim <= 0) throw ValidationError("dictionary input_dim must be positive");
  Dictionary d;
  d.kind_ = DictionaryKind::StatePlusConstant;
  d.input_dim_ = input_dim;
  d.max_degree_ = 1;
  d.exponents_ = graded_lex_exponents(input_dim, 1);
  d.init_normalization();
  return d;
}

Dictionary Dictionary::monomials(Eigen::Index input_dim, int max_degree) {
  if (input_dim <= 0) throw ValidationError("dictionary input_dim must be positive");
  if (max_degree < 1) throw ValidationError("monomial dictionary degree must be >= 1");
  Dictionary d;
  d.kind_ = DictionaryKind::Monomials;
  d.input_dim_ = input_dim;
  d.max_degree_ = max_degree;
  d.exponents_ = graded_lex_exponents(input_dim, max_degree);
  d.init_normalization();
  return d;
}

Dictionary Dictionary::gaussian_rbf(Eigen::MatrixXd centers, double bandwidth) {
  if (centers.rows() == 0 || centers.cols() == 0) {
    throw ValidationError("RBF dictionary needs at least one center");
  }
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw ValidationError("RBF bandwidth must be positive");
  }
  if (!centers.allFinite()) throw ValidationError("RBF centers must be finite");
  Dictionary d;
  d.kind_ = DictionaryKind::GaussianRBF;
  d.input_dim_ = centers.cols();
  d.max_degree_ = 1;
  d.centers_ = std::move(centers);
  d.bandwidth_ = bandwidth;
  d.init_normalization();
  return d;
}

Dictionary Dictionary::gaussian_rbf_fit(const Trajectory& traj, Eigen::Index n_centers,
                                        std::uint64_t seed, bool normalize) {
  if (traj.has_missing()) {
    throw ValidationError("gaussian_rbf_fit: trajectory has absent entries; call interpolate_missing first");
  }
  if (n_centers < 1 || n_centers > traj.size()) {
    throw ValidationError("gaussian_rbf_fit: n_centers must lie in [1, number of samples]");
  }
  Dictionary base = state_plus_constant(traj.dim());
  if (normalize) base = base.normalized_to(traj);
  const Eigen::MatrixXd pts =
      ((traj.states.rowwise() - base.offset_.transpose()).array().rowwise() / base.scale_.transpose().array())
          .matrix();
  const Eigen::Index m = pts.rows();

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers(n_centers, pts.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
  centers.row(0) = pts.row(pick(rng));
  Eigen::VectorXd d2 = (pts.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < n_centers; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (chosen = 0; chosen + 1 < m; ++chosen) {
        r -= d2(chosen);
        if (r <= 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = pts.row(chosen);
    d2 = d2.cwiseMin((pts.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(m), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index k = 0; k < m; ++k) {
      Eigen::Index best = 0;
      (centers.rowwise() - pts.row(k)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[static_cast<std::size_t>(k)] != best) {
        assign[static_cast<std::size_t>(k)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_centers, pts.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_centers);
    for (Eigen::Index k = 0; k < m; ++k) {
      sums.row(assign[static_cast<std::size_t>(k)]) += pts.row(k);
      counts(assign[static_cast<std::size_t>(k)]) += 1.0;
    }
    for (Eigen::Index c = 0; c < n_centers; ++c) {
      if (counts(c) > 0.0) centers.row(c) = sums.row(c) / counts(c);
    }
  }

  std::vector<double> dists;
  for (Eigen::Index a = 0; a < n_centers; ++a) {
    for (Eigen::Index b = a + 1; b < n_centers; ++b) dists.push_back((centers.row(a) - centers.row(b)).norm());
  }
  double bandwidth = 1.0;
  if (!dists.empty()) {
    std::sort(dists.begin(), dists.end());
    const std::size_t h = dists.size() / 2;
    const double med = dists.size() % 2 ? dists[h] : 0.5 * (dists[h - 1] + dists[h]);
    if (med > 0.0) bandwidth = med;
  }
  Dictionary d = gaussian_rbf(std::move(centers), bandwidth);
  d.offset_ = base.offset_;
  d.scale_ = base.scale_;
  return d;
}

Eigen::Index Dictionary::size() const {
  if (kind_ == DictionaryKind::GaussianRBF) return 1 + input_dim_ + centers_.rows();
  return static_cast<Eigen::Index>(exponents_.size());
}

Dictionary Dictionary::with_normalization(Eigen::VectorXd offset, Eigen::VectorXd scale) const {
  if (offset.size() != input_dim_ || scale.size() != input_dim_) {
    throw ValidationError("dictionary normalization has wrong dimension");
  }
  if (!offset.allFinite() || !scale.allFinite() || !(scale.array() > 0.0).all()) {
    throw ValidationError("dictionary normalization must be finite with positive scale");
  }
  Dictionary d = *this;
  d.offset_ = std::move(offset);
  d.scale_ = std::move(scale);
  return d;
}

Dictionary Dictionary::normalized_to(const Trajectory& traj) const {
  if (traj.dim() != input_dim_) throw ValidationError("normalized_to: trajectory dimension mismatch");
  if (traj.has_missing()) {
    throw ValidationError("normalized_to: trajectory has absent entries; call interpolate_missing first");
  }
  const Eigen::VectorXd mean = traj.states.colwise().mean().transpose();
  Eigen::VectorXd sd =
      ((traj.states.rowwise() - mean.transpose()).colwise().squaredNorm() / static_cast<double>(traj.size()))
          .cwiseSqrt()
          .transpose();
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    if (!(sd(i) > 0.0)) sd(i) = 1.0;
  }
  return with_normalization(mean, sd);
}

Eigen::VectorXd Dictionary::lift(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim_) {
    throw ValidationError("lift: state has dimension " + std::to_string(x.size()) + ", dictionary expects " +
                          std::to_string(input_dim_));
  }
  const Eigen::VectorXd u = ((x - offset_).array() / scale_.array()).matrix();
  Eigen::VectorXd out(size());
  if (kind_ == DictionaryKind::GaussianRBF) {
    out(0) = 1.0;
    out.segment(1, input_dim_) = u;
    const double denom = 2.0 * bandwidth_ * bandwidth_;
    for (Eigen::Index c = 0; c < centers_.rows(); ++c) {
      out(1 + input_dim_ + c) = std::exp(-(u.transpose() - centers_.row(c)).squaredNorm() / denom);
    }
    return out;
  }
  for (std::size_t k = 0; k < exponents_.size(); ++k) {
    double v = 1.0;
    for (Eigen::Index i = 0; i < input_dim_; ++i) {
      for (int p = 0; p < exponents_[k][static_cast<std::size_t>(i)]; ++p) v *= u(i);
    }
    out(static_cast<Eigen::Index>(k)) = v;
  }
  return out;
}

Eigen::MatrixXd Dictionary::lift_rows(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd out(states.rows(), size());
  for (Eigen::Index m = 0; m < states.rows(); ++m) out.row(m) = lift(states.row(m).transpose()).transpose();
  return out;
}

Eigen::MatrixXd Dictionary::lift_trajectory(const Trajectory& traj) const {
  if (traj.has_missing()) {
    throw ValidationError("lift_trajectory: trajectory has absent entries; call interpolate_missing first");
  }
  return lift_rows(traj.states);
}

std::string Dictionary::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case DictionaryKind::StatePlusConstant: os << "state_plus_constant"; break;
    case DictionaryKind::Monomials: os << "monomials(degree=" << max_degree_ << ")"; break;
    case DictionaryKind::GaussianRBF: os << "gaussian_rbf(centers=" << centers_.rows() << ")"; break;
  }
  os << " dim=" << input_dim_ << " K=" << size();
  return os.str();
}

}  // namespace robkoop
