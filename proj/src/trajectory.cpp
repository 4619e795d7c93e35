#include "robkoop/trajectory.hpp"

#include "robkoop/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace robkoop {

bool Trajectory::has_missing() const { return states.array().isNaN().any(); }

Trajectory Trajectory::segment(Eigen::Index first, Eigen::Index count) const {
  if (first < 0 || count < 0 || first + count > size()) {
    throw ValidationError("trajectory segment [" + std::to_string(first) + ", " +
                          std::to_string(first + count) + ") out of range for " +
                          std::to_string(size()) + " samples");
  }
  return Trajectory(time(first), dt, states.middleRows(first, count));
}

void Trajectory::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ValidationError("trajectory dt must be positive and finite");
  }
  if (states.rows() == 0 || states.cols() == 0) {
    throw ValidationError("trajectory is empty");
  }
  if (!std::isfinite(t0)) throw ValidationError("trajectory t0 is not finite");
  for (Eigen::Index k = 0; k < states.rows(); ++k) {
    for (Eigen::Index i = 0; i < states.cols(); ++i) {
      if (std::isinf(states(k, i))) {
        throw ValidationError("trajectory entry (" + std::to_string(k) + ", " +
                              std::to_string(i) + ") is infinite");
      }
    }
  }
}

Eigen::Index steps_for(double seconds, double dt) {
  return static_cast<Eigen::Index>(std::llround(seconds / dt));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& out, const Trajectory& traj) {
  out << "t";
  for (Eigen::Index i = 0; i < traj.dim(); ++i) out << ",x" << (i + 1);
  out << '\n';
  for (Eigen::Index k = 0; k < traj.size(); ++k) {
    out << format_double(traj.time(k));
    for (Eigen::Index i = 0; i < traj.dim(); ++i) {
      out << ',';
      if (!is_absent(traj.states(k, i))) out << format_double(traj.states(k, i));
    }
    out << '\n';
  }
}

void write_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  write_csv(out, traj);
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_field(const std::string& s, std::size_t row) {
  if (s.empty()) return kAbsent;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) {
    throw ValidationError("trajectory CSV row " + std::to_string(row) + ": cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

Trajectory read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trajectory CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "t") {
    throw ValidationError("trajectory CSV header must be t,x1,...,xn");
  }
  const std::size_t n = header.size() - 1;
  std::vector<double> times;
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != n + 1) {
      throw ValidationError("trajectory CSV row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(n + 1));
    }
    const double t = parse_field(fields[0], row);
    if (is_absent(t)) throw ValidationError("trajectory CSV row " + std::to_string(row) + " has no time");
    times.push_back(t);
    for (std::size_t i = 1; i <= n; ++i) values.push_back(parse_field(fields[i], row));
  }
  if (times.empty()) throw ValidationError("trajectory CSV has no samples");

  Trajectory traj;
  traj.t0 = times.front();
  if (times.size() > 1) {
    traj.dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    for (std::size_t k = 1; k < times.size(); ++k) {
      const double expected = traj.t0 + static_cast<double>(k) * traj.dt;
      if (std::abs(times[k] - expected) > 1e-9 * std::max(1.0, std::abs(expected))) {
        throw ValidationError("trajectory CSV times are not uniformly spaced at row " +
                              std::to_string(k + 1));
      }
    }
  }
  traj.states = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(n));
  traj.validate();
  return traj;
}

Trajectory read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read_csv(in);
}

}  // namespace robkoop
