#include <doctest.h>

#include "../support/oracles.hpp"
#include "robkoop/dynamics.hpp"
#include "robkoop/error.hpp"

#include <cmath>
#include <numbers>

using namespace robkoop;

namespace {

Eigen::VectorXd benchmark_equilibrium() {
  Eigen::VectorXd g(6);
  g << 0.30, 0.45, 0.50, 0, 0, 0;
  return equilibrium(DynamicsModel::swing_network(benchmark_swing_network()), g);
}

// Taylor series for expm, accurate for small |M|.
Eigen::MatrixXd expm_series(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * m / k;
    sum += term;
  }
  return sum;
}

SwingNetworkParams two_machine(double p, double b, double e1, double e2) {
  SwingNetworkParams s;
  s.inertia = Eigen::Vector2d(8.0, 5.0);
  s.damping = Eigen::Vector2d(2.0, 2.0);
  s.emf = Eigen::Vector2d(e1, e2);
  s.mech_power = Eigen::Vector2d(p, -p);
  Eigen::Matrix2d bm;
  bm << -b, b, b, -b;
  s.y_bus = std::complex<double>(0.0, 1.0) * bm.cast<std::complex<double>>();
  return s;
}

}  // namespace

TEST_CASE("linear map iterates exactly") {
  Eigen::Matrix2d a;
  a << 0.9, 0, 0, 0.5;
  const auto t = simulate(DynamicsModel::linear_map(a), Eigen::Vector2d(1, 1), 0.01, 3);
  REQUIRE(t.size() == 4);
  Eigen::MatrixXd expect(4, 2);
  expect << 1, 1, 0.9, 0.5, 0.81, 0.25, 0.729, 0.125;
  CHECK((t.states - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(t.time(3) == doctest::Approx(0.03));
}

TEST_CASE("swing network stays at its equilibrium") {
  const auto model = DynamicsModel::swing_network(benchmark_swing_network());
  const auto xeq = benchmark_equilibrium();
  CHECK(model.equilibrium_residual(xeq).norm() < 1e-10);
  const auto t = simulate(model, xeq, 0.01, 1000);
  CHECK((t.states.rowwise() - xeq.transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("analytic jacobian matches finite differences of the vector field") {
  const auto model = DynamicsModel::swing_network(benchmark_swing_network());
  Eigen::VectorXd x(6);
  x << 0.4, 0.1, 0.9, 0.01, -0.02, 0.005;
  const auto fd = oracle::finite_difference_jacobian([&](const Eigen::VectorXd& v) { return model.vector_field(v); }, x);
  CHECK((model.jacobian(x) - fd).cwiseAbs().maxCoeff() < 1e-6);

  const auto vdp = DynamicsModel::van_der_pol(1.3);
  const Eigen::Vector2d y(0.7, -0.4);
  const auto fd2 = oracle::finite_difference_jacobian([&](const Eigen::VectorXd& v) { return vdp.vector_field(v); }, y);
  CHECK((vdp.jacobian(y) - fd2).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("linearize") {
  SUBCASE("linear map returns A exactly") {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd a = oracle::random_stable(rng, 4, 0.9);
    CHECK(linearize(DynamicsModel::linear_map(a), Eigen::VectorXd::Zero(4), 0.01) == a);
  }
  SUBCASE("van der pol at the origin equals the flow jacobian") {
    const auto model = DynamicsModel::van_der_pol(1.0);
    const double dt = 0.01;
    const Eigen::MatrixXd lin = linearize(model, Eigen::Vector2d::Zero(), dt);
    Eigen::Matrix2d j;
    j << 0, 1, -1, 1;
    CHECK((lin - expm_series(j * dt)).cwiseAbs().maxCoeff() < 1e-12);
    SimulationOptions opts;
    opts.substeps = 4;
    const auto flow = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return simulate(model, x, dt, 1, {}, opts).states.row(1).transpose();
    };
    const auto fd = oracle::finite_difference_jacobian(flow, Eigen::Vector2d::Zero(), 1e-5);
    CHECK((lin - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("swing equilibrium gives conjugate pairs") {
    const auto model = DynamicsModel::swing_network(benchmark_swing_network());
    const Eigen::MatrixXd lin = linearize(model, benchmark_equilibrium(), 0.01);
    Eigen::EigenSolver<Eigen::MatrixXd> es(lin, false);
    std::vector<std::complex<double>> ev, conj;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      ev.push_back(es.eigenvalues()(i));
      conj.push_back(std::conj(es.eigenvalues()(i)));
    }
    CHECK(oracle::same_eigenvalues(ev, conj, 1e-12));
    for (const auto& e : ev) CHECK(std::abs(e) < 1.0);
  }
  SUBCASE("non-equilibrium point is rejected") {
    CHECK_THROWS_AS(linearize(DynamicsModel::van_der_pol(1.0), Eigen::Vector2d(1.0, 0.0), 0.01), ValidationError);
  }
}

TEST_CASE("equilibrium") {
  SUBCASE("stable linear map goes to zero") {
    Eigen::Matrix2d a;
    a << 0.5, 0.2, -0.1, 0.7;
    const auto x = equilibrium(DynamicsModel::linear_map(a), Eigen::Vector2d(3.0, -8.0));
    CHECK(x.norm() < 1e-12);
  }
  SUBCASE("van der pol goes to the origin") {
    const auto x = equilibrium(DynamicsModel::van_der_pol(1.0), Eigen::Vector2d(0.3, -0.2));
    CHECK(x.norm() < 1e-10);
  }
  SUBCASE("two machines match the closed-form power angle") {
    const double p = 0.8, b = 2.0, e1 = 1.1, e2 = 0.95;
    const auto model = DynamicsModel::swing_network(two_machine(p, b, e1, e2));
    const auto x = equilibrium(model, Eigen::Vector4d(0.1, 0.0, 0.0, 0.0));
    CHECK(model.vector_field(x).norm() < 1e-10);
    CHECK(x(0) - x(1) == doctest::Approx(std::asin(p / (e1 * e2 * b))).epsilon(1e-10));
    CHECK(std::abs(x(2)) < 1e-12);
    CHECK(std::abs(x(3)) < 1e-12);
  }
  SUBCASE("unreachable equilibrium reports failure") {
    // transferred power above the line limit: no solution exists
    const auto model = DynamicsModel::swing_network(two_machine(3.0, 1.0, 1.0, 1.0));
    CHECK_THROWS_AS(equilibrium(model, Eigen::Vector4d(0.1, 0.0, 0.0, 0.0)), NumericalError);
  }
}

TEST_CASE("rk4 converges at fourth order") {
  const auto model = DynamicsModel::van_der_pol(1.0);
  const Eigen::Vector2d x0(2.0, 0.0);
  auto final_state = [&](int substeps) {
    SimulationOptions o;
    o.substeps = substeps;
    return Eigen::VectorXd(simulate(model, x0, 0.2, 10, {}, o).states.row(10).transpose());
  };
  const auto ref = final_state(256);
  const double e1 = (final_state(2) - ref).norm();
  const double e2 = (final_state(4) - ref).norm();
  const double e3 = (final_state(8) - ref).norm();
  CHECK(std::log2(e1 / e2) >= 3.5);
  CHECK(std::log2(e2 / e3) >= 3.5);
}

TEST_CASE("post-fault decay follows the dominant linearized mode") {
  const auto params = benchmark_swing_network();
  const auto model = DynamicsModel::swing_network(params);
  const auto xeq = benchmark_equilibrium();
  FaultEvent f;
  f.apply_time = 0.1;
  f.clear_time = 0.2;
  f.target_bus = 0;
  f.admittance_scale = 0.0;
  const double dt = 0.01;
  const auto t = simulate(model, xeq, dt, 1020, {f});

  // Jacobian from finite differences of the vector field, independent of the analytic one.
  const auto j = oracle::finite_difference_jacobian([&](const Eigen::VectorXd& v) { return model.vector_field(v); }, xeq);
  Eigen::EigenSolver<Eigen::MatrixXd> es(j);
  Eigen::Index dom = 0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    const auto l = es.eigenvalues()(i);
    if (l.imag() > 0 && (es.eigenvalues()(dom).imag() <= 0 || l.real() > es.eigenvalues()(dom).real())) dom = i;
  }
  const std::complex<double> lambda = es.eigenvalues()(dom);
  const Eigen::MatrixXcd left = es.eigenvectors().inverse();  // rows are left eigenvectors

  // Modal coordinate of the deviation; its log-magnitude decays at Re(lambda).
  std::vector<double> ts, logs;
  for (Eigen::Index k = 320; k <= 1020; k += 10) {
    const Eigen::VectorXcd dx = (t.states.row(k).transpose() - xeq).cast<std::complex<double>>();
    ts.push_back(t.time(k));
    logs.push_back(std::log(std::abs((left.row(dom) * dx).value())));
  }
  double mt = 0, ml = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    ml += logs[i];
  }
  mt /= static_cast<double>(ts.size());
  ml /= static_cast<double>(ts.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxy += (ts[i] - mt) * (logs[i] - ml);
    sxx += (ts[i] - mt) * (ts[i] - mt);
  }
  const double rate = sxy / sxx;
  CHECK(rate < 0.0);
  CHECK(std::abs(rate - lambda.real()) / std::abs(lambda.real()) < 0.05);
  // and the trajectory as a whole settles toward the equilibrium
  CHECK((t.states.row(1020).transpose() - xeq).norm() < 0.1 * (t.states.row(20).transpose() - xeq).norm());
}

TEST_CASE("simulate validation and blow-up diagnostics") {
  const auto swing = DynamicsModel::swing_network(benchmark_swing_network());
  FaultEvent bad;
  bad.apply_time = 0.1;
  bad.clear_time = 0.2;
  bad.target_bus = 5;
  CHECK_THROWS_AS(simulate(swing, benchmark_equilibrium(), 0.01, 10, {bad}), ValidationError);
  FaultEvent ok = bad;
  ok.target_bus = 0;
  CHECK_THROWS_AS(simulate(DynamicsModel::van_der_pol(1.0), Eigen::Vector2d(1, 0), 0.01, 10, {ok}), ValidationError);
  FaultEvent reversed = ok;
  reversed.clear_time = 0.05;
  CHECK_THROWS_AS(reversed.validate(), ValidationError);
  CHECK_THROWS_AS(simulate(DynamicsModel::van_der_pol(1.0), Eigen::Vector3d(1, 0, 0), 0.01, 10), ValidationError);

  Eigen::MatrixXd huge(1, 1);
  huge << 1e200;
  try {
    simulate(DynamicsModel::linear_map(huge), Eigen::VectorXd::Ones(1), 0.01, 5);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }
}

TEST_CASE("model validation") {
  auto p = benchmark_swing_network();
  p.damping(1) = 0.0;
  CHECK_THROWS_AS(DynamicsModel::swing_network(p), ValidationError);
  p = benchmark_swing_network();
  p.inertia(0) = -1.0;
  CHECK_THROWS_AS(DynamicsModel::swing_network(p), ValidationError);
  CHECK_THROWS_AS(DynamicsModel::linear_map(Eigen::MatrixXd::Zero(2, 3)), ValidationError);
  CHECK(DynamicsModel::swing_network(benchmark_swing_network()).state_dim() == 6);
}

TEST_CASE("angular speed reporting") {
  CHECK(angular_speed(0.0) == doctest::Approx(2.0 * std::numbers::pi * 60.0));
  CHECK(angular_speed(0.01) == doctest::Approx(2.0 * std::numbers::pi * 60.0 * 1.01));
  const auto params = benchmark_swing_network();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 6);
  s(1, 3) = 0.002;
  const auto out = with_angular_speed(Trajectory(0.0, 0.01, s), params);
  CHECK(out.states(1, 3) == doctest::Approx(2.0 * std::numbers::pi * 60.0 * 1.002));
  CHECK(out.states(1, 0) == 0.0);
}
