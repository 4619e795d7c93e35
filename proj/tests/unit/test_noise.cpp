#include <doctest.h>

#include "robkoop/error.hpp"
#include "robkoop/noise.hpp"

#include <cmath>
#include <numbers>

using namespace robkoop;

namespace {

Trajectory sinusoid(Eigen::Index n, double amplitude = std::sqrt(2.0), double offset = 0.0) {
  Eigen::MatrixXd s(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) s(k, 0) = offset + amplitude * std::sin(2.0 * std::numbers::pi * 0.37 * 0.01 * k);
  return Trajectory(0.0, 0.01, s);
}

double variance(const Eigen::VectorXd& v) {
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("clean spec is the identity") {
  const auto t = sinusoid(100);
  const auto out = corrupt(t, NoiseSpec{});
  CHECK((out.states.array() == t.states.array()).all());
}

TEST_CASE("noise variance follows the requested snr") {
  const auto t = sinusoid(20000);  // unit AC power
  for (double snr : {20.0, 17.0}) {
    NoiseSpec spec;
    spec.snr_db = snr;
    spec.seed = 11;
    const auto out = corrupt(t, spec);
    const Eigen::VectorXd noise = out.states.col(0) - t.states.col(0);
    const double expected = std::pow(10.0, -snr / 10.0);
    CHECK(std::abs(variance(noise) - expected) / expected < 0.05);
    CHECK(std::abs(noise.mean()) < 4.0 * std::sqrt(expected) / std::sqrt(20000.0));
    CHECK(std::abs(realized_snr_db(t, out, 0) - snr) < 0.5);
  }
}

TEST_CASE("ac power ignores the channel offset") {
  const auto t = sinusoid(20000, std::sqrt(2.0), 377.0);
  NoiseSpec spec;
  spec.snr_db = 20.0;
  const Eigen::VectorXd noise = corrupt(t, spec).states.col(0) - t.states.col(0);
  CHECK(variance(noise) == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("seeds are reproducible and independent") {
  const auto t = sinusoid(10000);
  NoiseSpec a;
  a.snr_db = 20.0;
  a.seed = 1;
  NoiseSpec b = a;
  b.seed = 2;
  const auto x1 = corrupt(t, a);
  const auto x2 = corrupt(t, a);
  const auto y = corrupt(t, b);
  CHECK((x1.states.array() == x2.states.array()).all());
  const Eigen::VectorXd n1 = x1.states.col(0) - t.states.col(0);
  const Eigen::VectorXd n2 = y.states.col(0) - t.states.col(0);
  const double corr = (n1.array() - n1.mean()).matrix().dot((n2.array() - n2.mean()).matrix()) /
                      std::sqrt(variance(n1) * variance(n2)) / static_cast<double>(n1.size());
  CHECK(std::abs(corr) < 0.05);
}

TEST_CASE("zero-power channel is named in the error") {
  Eigen::MatrixXd s(100, 2);
  s.col(0) = sinusoid(100).states.col(0);
  s.col(1).setConstant(3.0);
  NoiseSpec spec;
  spec.snr_db = 20.0;
  try {
    corrupt(Trajectory(0.0, 0.01, s), spec);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("channel 2") != std::string::npos);
  }
}

TEST_CASE("spec validation") {
  NoiseSpec s;
  s.missing_fraction = 1.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = NoiseSpec{};
  s.outlier_fraction = -0.1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = NoiseSpec{};
  s.snr_db = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("missing samples and outliers") {
  const auto t = sinusoid(5000);
  NoiseSpec spec;
  spec.missing_fraction = 0.05;
  spec.outlier_fraction = 0.01;
  spec.outlier_magnitude = 5.0;
  spec.seed = 5;
  const auto out = corrupt(t, spec);
  const double offset = 5.0 * std::sqrt(variance(t.states.col(0)));
  Eigen::Index missing = 0, outliers = 0;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    if (is_absent(out.states(k, 0))) {
      ++missing;
    } else if (std::abs(out.states(k, 0) - t.states(k, 0)) > 1e-12) {
      ++outliers;
      CHECK(std::abs(out.states(k, 0) - t.states(k, 0)) == doctest::Approx(offset).epsilon(1e-9));
    }
  }
  CHECK(!is_absent(out.states(0, 0)));
  CHECK(!is_absent(out.states(out.size() - 1, 0)));
  CHECK(missing > 150);
  CHECK(missing < 350);
  CHECK(outliers > 20);
  CHECK(outliers < 90);
}

TEST_CASE("interpolate_missing") {
  SUBCASE("midpoint") {
    Eigen::MatrixXd s(3, 1);
    s << 0.0, kAbsent, 2.0;
    const auto out = interpolate_missing(Trajectory(0.0, 0.01, s));
    CHECK(out.states(1, 0) == doctest::Approx(1.0));
  }
  SUBCASE("identity without gaps") {
    const auto t = sinusoid(50);
    CHECK((interpolate_missing(t).states.array() == t.states.array()).all());
  }
  SUBCASE("edge gaps cannot be filled") {
    Eigen::MatrixXd s(3, 1);
    s << kAbsent, 1.0, 2.0;
    CHECK_THROWS_AS(interpolate_missing(Trajectory(0.0, 0.01, s)), ValidationError);
    s << 0.0, 1.0, kAbsent;
    CHECK_THROWS_AS(interpolate_missing(Trajectory(0.0, 0.01, s)), ValidationError);
  }
  SUBCASE("fill error bounded by local curvature") {
    const auto t = sinusoid(4000);
    NoiseSpec spec;
    spec.missing_fraction = 0.05;
    spec.seed = 9;
    const auto holes = corrupt(t, spec);
    const auto filled = interpolate_missing(holes);
    CHECK(!filled.has_missing());
    // linear interpolation error over a gap of h samples is at most h^2/8 * max|x''| (per-sample units)
    double max_second = 0.0;
    for (Eigen::Index k = 1; k + 1 < t.size(); ++k) {
      max_second = std::max(max_second, std::abs(t.states(k + 1, 0) - 2 * t.states(k, 0) + t.states(k - 1, 0)));
    }
    Eigen::Index k = 0;
    while (k < holes.size()) {
      if (!is_absent(holes.states(k, 0))) {
        ++k;
        continue;
      }
      Eigen::Index end = k;
      while (is_absent(holes.states(end, 0))) ++end;
      const double h = static_cast<double>(end - (k - 1));
      for (Eigen::Index m = k; m < end; ++m) {
        CHECK(std::abs(filled.states(m, 0) - t.states(m, 0)) <= h * h / 8.0 * max_second * 1.01 + 1e-15);
      }
      k = end;
    }
  }
}
