#include <doctest.h>

#include "../support/oracles.hpp"
#include "robkoop/dictionary.hpp"
#include "robkoop/error.hpp"

using namespace robkoop;

TEST_CASE("lift examples") {
  const Eigen::Vector2d x(2, 3);
  CHECK(Dictionary::state_plus_constant(2).lift(x) == Eigen::Vector3d(1, 2, 3));
  Eigen::VectorXd m2(6);
  m2 << 1, 2, 3, 4, 6, 9;
  CHECK(Dictionary::monomials(2, 2).lift(x) == m2);
  Eigen::MatrixXd centers(2, 2);
  centers << 2, 3, 0, 0;
  const auto rbf = Dictionary::gaussian_rbf(centers, 0.7);
  const auto f = rbf.lift(x);
  REQUIRE(f.size() == 5);
  CHECK(f(0) == 1.0);
  CHECK(f(1) == 2.0);
  CHECK(f(2) == 3.0);
  CHECK(f(3) == 1.0);
  CHECK(f(4) == doctest::Approx(std::exp(-13.0 / (2 * 0.49))));
}

TEST_CASE("sizes match the analytic counts") {
  for (int n = 1; n <= 6; ++n) {
    for (int d = 1; d <= 3; ++d) {
      const auto dict = Dictionary::monomials(n, d);
      CHECK(dict.size() == monomial_count(n, d));
      // C(n + d, d)
      double c = 1;
      for (int i = 1; i <= d; ++i) c = c * (n + i) / i;
      CHECK(dict.size() == static_cast<Eigen::Index>(std::llround(c)));
    }
  }
  CHECK(Dictionary::state_plus_constant(6).size() == 7);
}

TEST_CASE("constant first, coordinates next, graded order") {
  const auto d = Dictionary::monomials(3, 3);
  const auto& e = d.exponents();
  CHECK(std::accumulate(e[0].begin(), e[0].end(), 0) == 0);
  for (int i = 0; i < 3; ++i) {
    CHECK(e[static_cast<std::size_t>(Dictionary::coordinate_index(i))][static_cast<std::size_t>(i)] == 1);
  }
  for (std::size_t k = 1; k < e.size(); ++k) {
    CHECK(std::accumulate(e[k - 1].begin(), e[k - 1].end(), 0) <= std::accumulate(e[k].begin(), e[k].end(), 0));
  }
  // all exponent vectors distinct
  auto sorted = e;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("lift_trajectory") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd s = oracle::random_matrix(rng, 20, 3);
  const Trajectory t(0.0, 0.1, s);
  const auto d1 = Dictionary::monomials(3, 1);
  const auto f1 = d1.lift_trajectory(t);
  CHECK(f1.col(0) == Eigen::VectorXd::Ones(20));
  CHECK(f1.rightCols(3) == s);
  const auto d2 = Dictionary::monomials(3, 2).normalized_to(t);
  const auto f2 = d2.lift_trajectory(t);
  for (Eigen::Index m = 0; m < 20; ++m) CHECK((f2.row(m).transpose() - d2.lift(s.row(m).transpose())).norm() == 0.0);
  const auto single = d2.lift_trajectory(t.segment(5, 1));
  CHECK(single.rows() == 1);
  CHECK(single.row(0) == f2.row(5));

  Eigen::MatrixXd holes = s;
  holes(3, 1) = kAbsent;
  CHECK_THROWS_AS(d1.lift_trajectory(Trajectory(0.0, 0.1, holes)), ValidationError);
  CHECK_THROWS_AS(d1.lift(Eigen::Vector2d(1, 2)), ValidationError);
}

TEST_CASE("normalization keeps the monomial span") {
  // Features of the normalized dictionary are an invertible linear recombination
  // of the raw ones: least squares of one onto the other is exact.
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd s = oracle::random_matrix(rng, 60, 2, 3.0).array() + 10.0;
  const Trajectory t(0.0, 0.1, s);
  const auto raw = Dictionary::monomials(2, 3).lift_trajectory(t);
  const auto norm = Dictionary::monomials(2, 3).normalized_to(t).lift_trajectory(t);
  const Eigen::MatrixXd coef = raw.colPivHouseholderQr().solve(norm);
  CHECK((raw * coef - norm).norm() / norm.norm() < 1e-9);
  CHECK(norm.col(1).mean() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("lift is locally Lipschitz") {
  std::mt19937_64 rng(12);
  const auto d = Dictionary::monomials(3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = oracle::random_matrix(rng, 3, 1);
    const Eigen::VectorXd dir = oracle::random_matrix(rng, 3, 1).normalized();
    // bound on the feature Jacobian over the unit ball around x, from finite differences
    const auto jac = oracle::finite_difference_jacobian([&](const Eigen::VectorXd& v) { return d.lift(v); }, x);
    for (double eps : {1e-3, 1e-5}) {
      const double change = (d.lift(x + eps * dir) - d.lift(x)).norm();
      CHECK(change <= (jac.norm() + 1.0) * eps * 1.01);
    }
  }
}

TEST_CASE("rbf fit") {
  std::mt19937_64 rng(21);
  const Eigen::MatrixXd s = oracle::random_matrix(rng, 200, 2);
  const Trajectory t(0.0, 0.01, s);
  const auto d = Dictionary::gaussian_rbf_fit(t, 8, 3, true);
  CHECK(d.size() == 1 + 2 + 8);
  CHECK(d.bandwidth() > 0.0);
  const auto again = Dictionary::gaussian_rbf_fit(t, 8, 3, true);
  CHECK(d.centers() == again.centers());
  CHECK_THROWS_AS(Dictionary::gaussian_rbf(Eigen::MatrixXd::Zero(1, 2), 0.0), ValidationError);
  CHECK_THROWS_AS(Dictionary::monomials(2, 0), ValidationError);
}
