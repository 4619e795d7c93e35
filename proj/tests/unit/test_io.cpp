#include <doctest.h>

#include "../support/oracles.hpp"
#include "robkoop/dynamics.hpp"
#include "robkoop/error.hpp"
#include "robkoop/io.hpp"

#include <sstream>

using namespace robkoop;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

KoopmanModel roundtrip(const KoopmanModel& m) {
  std::stringstream ss;
  write_model(ss, m);
  return read_model(ss);
}

}  // namespace

TEST_CASE("model files round-trip exactly") {
  std::mt19937_64 rng(1);
  const Trajectory traj(0.0, 0.1, oracle::random_matrix(rng, 60, 2));

  KoopmanModel m;
  m.dictionary = Dictionary::monomials(2, 3).normalized_to(traj);
  m.k = oracle::random_matrix(rng, m.dictionary.size(), m.dictionary.size());
  m.dt = 0.05;
  m.estimator = Estimator::Robust;
  m.c_tilde = 1.25e-7;
  const auto back = roundtrip(m);
  CHECK(back.k == m.k);
  CHECK(back.dt == m.dt);
  CHECK(back.estimator == Estimator::Robust);
  CHECK(back.c_tilde == m.c_tilde);
  CHECK(back.dictionary.kind() == DictionaryKind::Monomials);
  CHECK(back.dictionary.max_degree() == 3);
  CHECK(back.dictionary.offset() == m.dictionary.offset());
  CHECK(back.dictionary.scale() == m.dictionary.scale());
  const Eigen::Vector2d x(0.3, -1.1);
  CHECK(back.dictionary.lift(x) == m.dictionary.lift(x));

  KoopmanModel r;
  r.dictionary = Dictionary::gaussian_rbf_fit(traj, 5, 7, true);
  r.k = oracle::random_matrix(rng, r.dictionary.size(), r.dictionary.size());
  r.estimator = Estimator::Edmd;
  r.ridge = 1e-3;
  const auto rb = roundtrip(r);
  CHECK(rb.dictionary.kind() == DictionaryKind::GaussianRBF);
  CHECK(rb.dictionary.centers() == r.dictionary.centers());
  CHECK(rb.dictionary.bandwidth() == r.dictionary.bandwidth());
  CHECK(rb.dictionary.lift(x) == r.dictionary.lift(x));
  CHECK(rb.ridge == 1e-3);
}

TEST_CASE("malformed model files are rejected") {
  std::istringstream none("1,2\n3,4\n");
  CHECK_THROWS_AS(read_model(none), ValidationError);
  std::istringstream bad_kind(
      "# robkoop-model: 1\n# dictionary: {\"kind\":\"wavelet\"}\n# dt: 0.1\n1\n");
  CHECK_THROWS_AS(read_model(bad_kind), ValidationError);

  KoopmanModel m;
  m.dictionary = Dictionary::state_plus_constant(1);
  m.k = Eigen::MatrixXd::Identity(2, 2);
  std::stringstream ss;
  write_model(ss, m);
  std::string text = ss.str();
  text += "5,6,7\n";
  std::istringstream ragged(text);
  CHECK_THROWS_AS(read_model(ragged), ValidationError);
  std::istringstream junk("# robkoop-model: 1\n# dictionary: {\"kind\":\"state_plus_constant\",\"input_dim\":1}\n# dt: 0.1\n1,x\n0,1\n");
  CHECK_THROWS_AS(read_model(junk), ValidationError);
}

TEST_CASE("spectrum csv lists dominant entries first and degenerate ones last") {
  Eigen::Matrix3d k;
  k << 0.5, 0, 0, 0, 0.0, 0, 0, 0, 0.9;
  std::ostringstream ss;
  write_spectrum_csv(ss, spectrum(k, 0.1));
  const auto lines = lines_of(ss.str());
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "re_discrete,im_discrete,re_continuous,im_continuous,magnitude");
  CHECK(std::stod(fields(lines[1])[4]) == doctest::Approx(0.9));
  CHECK(std::stod(fields(lines[2])[4]) == doctest::Approx(0.5));
  CHECK(fields(lines[3])[2] == "-inf");
  for (std::size_t i = 1; i < lines.size(); ++i) CHECK(fields(lines[i]).size() == 5);
}

TEST_CASE("forecast csv is long format with 1-based state index") {
  ForecastReport r;
  r.window_start = 2.0;
  r.predicted = Trajectory(6.0, 0.5, Eigen::MatrixXd::Ones(3, 2));
  std::ostringstream ss;
  write_forecast_csv(ss, {r});
  auto lines = lines_of(ss.str());
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "window_start,t,state_index,predicted,truth");
  CHECK(lines[1] == "2,6,1,1,");
  CHECK(lines[2] == "2,6,2,1,");
  CHECK(lines[6] == "2,7,2,1,");

  r.truth = Trajectory(6.0, 0.5, Eigen::MatrixXd::Zero(3, 2));
  r.per_state_relative_error = {0.5, 0.25};
  r.per_state_plain_error = {1.0, 2.0};
  std::ostringstream s2, s3;
  write_forecast_csv(s2, {r, r});
  lines = lines_of(s2.str());
  CHECK(lines.size() == 13);
  CHECK(lines[1] == "2,6,1,1,0");
  write_forecast_errors_csv(s3, {r});
  lines = lines_of(s3.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "window_start,state_index,relative_error,plain_error");
  CHECK(lines[2] == "2,2,0.25,2");
}

TEST_CASE("trend statistics") {
  const auto down = trend_stats({1, 2, 3, 4}, {4, 3, 2, 1});
  CHECK(down.slope == doctest::Approx(-1.0));
  CHECK(down.kendall_tau == doctest::Approx(-1.0));
  CHECK(down.non_increasing);
  const auto up = trend_stats({3, 1, 2}, {3, 1, 2});
  CHECK(up.slope == doctest::Approx(1.0));
  CHECK(up.kendall_tau == doctest::Approx(1.0));
  CHECK(!up.non_increasing);
  CHECK(trend_stats({1}, {5}).non_increasing);
  CHECK_THROWS_AS(trend_stats({1, 2}, {1}), ValidationError);
}

TEST_CASE("length csv ends with trend lines") {
  std::vector<LengthPoint> pts(3);
  for (int i = 0; i < 3; ++i) {
    pts[static_cast<std::size_t>(i)].train_length = i + 1;
    pts[static_cast<std::size_t>(i)].mean_relative_error = 0.5 / (i + 1);
    pts[static_cast<std::size_t>(i)].mean_plain_error = 0.1;
  }
  std::ostringstream ss, sp;
  write_length_csv(ss, pts);
  const auto lines = lines_of(ss.str());
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "train_length_s,mean_rel_error");
  CHECK(lines[1] == "1,0.5");
  CHECK(lines[4].rfind("# slope=", 0) == 0);
  CHECK(lines[5] == "# kendall_tau=-1");
  CHECK(lines[6] == "# non_increasing=true");
  write_length_csv(sp, pts, true);
  CHECK(lines_of(sp.str())[0] == "train_length_s,mean_plain_error");
  CHECK(lines_of(sp.str())[5] == "# kendall_tau=0");
}

TEST_CASE("mode comparison report") {
  using C = std::complex<double>;
  const std::vector<C> ref{{-0.5, 3}, {-0.5, -3}, {-1, 8}, {-1, -8}};
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(5, 5);
  k(0, 0) = 1.0;  // constant mode
  const double dt = 0.01;
  auto block = [&](Eigen::Index at, C l) {
    const C d = std::exp(l * dt);
    k(at, at) = d.real();
    k(at, at + 1) = -d.imag();
    k(at + 1, at) = d.imag();
    k(at + 1, at + 1) = d.real();
  };
  block(1, ref[0]);
  block(3, ref[2]);
  const auto exact = spectrum(k, dt, 0);
  block(1, C(-0.6, 3));
  const auto off = spectrum(k, dt, 0);

  const auto text = compare_modes_report({{"edmd", exact}, {"robust", off}}, ref, 4);
  const auto lines = lines_of(text);
  REQUIRE(lines.size() == 1 + 2 + 4 + 4 + 4);
  CHECK(lines[0] == "row_type,method,re,im,mode_error");
  CHECK(fields(lines[1])[1] == "edmd");
  CHECK(std::stod(fields(lines[1])[4]) < 1e-10);
  CHECK(std::stod(fields(lines[2])[4]) == doctest::Approx(0.1 * 2 / 4));
  int reference_rows = 0;
  for (const auto& l : lines) {
    CHECK(fields(l).size() == 5);
    if (l.rfind("scatter,reference,", 0) == 0) ++reference_rows;
  }
  CHECK(reference_rows == 4);
  CHECK_THROWS_AS(compare_modes_report({{"edmd", exact}}, ref, 5), ValidationError);
  CHECK_THROWS_AS(compare_modes_report({}, ref, 2), ValidationError);
}
