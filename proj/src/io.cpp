#include "robkoop/io.hpp"

#include "robkoop/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace robkoop {

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const char* kind_name(DictionaryKind k) {
  switch (k) {
    case DictionaryKind::StatePlusConstant: return "state_plus_constant";
    case DictionaryKind::Monomials: return "monomials";
    case DictionaryKind::GaussianRBF: return "gaussian_rbf";
  }
  return "?";
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("cannot parse number '" + s + "'");
  }
  if (used != s.size()) throw ValidationError("cannot parse number '" + s + "'");
  return v;
}

void write_eigen_row(std::ostream& out, std::complex<double> d, std::complex<double> c) {
  out << format_double(d.real()) << ',' << format_double(d.imag()) << ',' << format_double(c.real()) << ','
      << format_double(c.imag()) << ',' << format_double(std::abs(d)) << '\n';
}

}  // namespace

std::string dictionary_to_json(const Dictionary& dict) {
  json j;
  j["kind"] = kind_name(dict.kind());
  j["input_dim"] = dict.input_dim();
  if (dict.kind() == DictionaryKind::Monomials) j["degree"] = dict.max_degree();
  if (dict.kind() == DictionaryKind::GaussianRBF) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < dict.centers().rows(); ++r) {
      const Eigen::VectorXd row = dict.centers().row(r).transpose();
      rows.emplace_back(row.data(), row.data() + row.size());
    }
    j["centers"] = rows;
    j["bandwidth"] = dict.bandwidth();
  }
  j["offset"] = vec_to_json(dict.offset());
  j["scale"] = vec_to_json(dict.scale());
  return j.dump();
}

Dictionary dictionary_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    const auto kind = j.at("kind").get<std::string>();
    const auto n = j.at("input_dim").get<Eigen::Index>();
    Dictionary d;
    if (kind == "state_plus_constant") {
      d = Dictionary::state_plus_constant(n);
    } else if (kind == "monomials") {
      d = Dictionary::monomials(n, j.at("degree").get<int>());
    } else if (kind == "gaussian_rbf") {
      const auto rows = j.at("centers").get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd centers(static_cast<Eigen::Index>(rows.size()), n);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != n) throw ValidationError("dictionary: center has wrong dimension");
        for (Eigen::Index c = 0; c < n; ++c) centers(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
      }
      d = Dictionary::gaussian_rbf(centers, j.at("bandwidth").get<double>());
    } else {
      throw ValidationError("dictionary: unknown kind '" + kind + "'");
    }
    if (j.contains("offset")) d = d.with_normalization(vec_from_json(j["offset"]), vec_from_json(j["scale"]));
    return d;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("dictionary: malformed description: ") + e.what());
  }
}

void write_model(std::ostream& out, const KoopmanModel& model) {
  model.validate();
  out << "# robkoop-model: " << kCsvSchemaVersion << '\n';
  out << "# dictionary: " << dictionary_to_json(model.dictionary) << '\n';
  out << "# dt: " << format_double(model.dt) << '\n';
  out << "# estimator: " << (model.estimator == Estimator::Edmd ? "edmd" : "robust") << '\n';
  out << "# ridge: " << format_double(model.ridge) << '\n';
  out << "# c_tilde: " << format_double(model.c_tilde) << '\n';
  for (Eigen::Index r = 0; r < model.k.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.k.cols(); ++c) {
      if (c) out << ',';
      out << format_double(model.k(r, c));
    }
    out << '\n';
  }
}

KoopmanModel read_model(std::istream& in) {
  KoopmanModel model;
  bool have_dict = false;
  bool have_dt = false;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = line.substr(2, colon - 2);
      const std::string value = line.substr(colon + 2);
      if (key == "dictionary") {
        model.dictionary = dictionary_from_json(value);
        have_dict = true;
      } else if (key == "dt") {
        model.dt = parse_double(value);
        have_dt = true;
      } else if (key == "estimator") {
        if (value != "edmd" && value != "robust") throw ValidationError("model: unknown estimator '" + value + "'");
        model.estimator = value == "edmd" ? Estimator::Edmd : Estimator::Robust;
      } else if (key == "ridge") {
        model.ridge = parse_double(value);
      } else if (key == "c_tilde") {
        model.c_tilde = parse_double(value);
      }
      continue;
    }
    std::vector<double> row;
    for (const auto& f : split(line, ',')) row.push_back(parse_double(f));
    rows.push_back(std::move(row));
  }
  if (!have_dict || !have_dt) throw ValidationError("model: missing dictionary or dt header");
  const auto k = static_cast<Eigen::Index>(rows.size());
  model.k.resize(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != k) {
      throw ValidationError("model: matrix is not square");
    }
    for (Eigen::Index c = 0; c < k; ++c) model.k(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  model.validate();
  return model;
}

void write_spectrum_csv(std::ostream& out, const Spectrum& spec) {
  out << "re_discrete,im_discrete,re_continuous,im_continuous,magnitude\n";
  for (auto i : spec.dominance_order) write_eigen_row(out, spec.discrete(i), spec.continuous(i));
  for (Eigen::Index i = 0; i < spec.size(); ++i) {
    if (spec.degenerate[static_cast<std::size_t>(i)]) write_eigen_row(out, spec.discrete(i), spec.continuous(i));
  }
}

void write_eigenvalues_csv(std::ostream& out, const std::vector<std::complex<double>>& continuous, double dt) {
  out << "re_discrete,im_discrete,re_continuous,im_continuous,magnitude\n";
  for (const auto& c : sorted_modes(continuous, ModeOrdering::Magnitude, dt)) write_eigen_row(out, std::exp(c * dt), c);
}

void write_forecast_csv(std::ostream& out, const std::vector<ForecastReport>& reports) {
  out << "window_start,t,state_index,predicted,truth\n";
  for (const auto& r : reports) {
    for (Eigen::Index k = 0; k < r.predicted.size(); ++k) {
      for (Eigen::Index i = 0; i < r.predicted.dim(); ++i) {
        out << format_double(r.window_start) << ',' << format_double(r.predicted.time(k)) << ',' << (i + 1) << ','
            << format_double(r.predicted.states(k, i)) << ',';
        if (r.truth) out << format_double(r.truth->states(k, i));
        out << '\n';
      }
    }
  }
}

void write_forecast_errors_csv(std::ostream& out, const std::vector<ForecastReport>& reports) {
  out << "window_start,state_index,relative_error,plain_error\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.per_state_relative_error.size(); ++i) {
      out << format_double(r.window_start) << ',' << (i + 1) << ',' << format_double(r.per_state_relative_error[i])
          << ',' << format_double(r.per_state_plain_error[i]) << '\n';
    }
  }
}

TrendStats trend_stats(const std::vector<double>& lengths, const std::vector<double>& errors) {
  if (lengths.size() != errors.size()) throw ValidationError("trend_stats: size mismatch");
  TrendStats t;
  const std::size_t n = lengths.size();
  if (n < 2) {
    t.non_increasing = true;
    return t;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lengths[i];
    my += errors[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lengths[i] - mx) * (errors[i] - my);
    sxx += (lengths[i] - mx) * (lengths[i] - mx);
  }
  t.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = (lengths[j] - lengths[i]) * (errors[j] - errors[i]);
      concordant += s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
      pairs += 1.0;
    }
  }
  t.kendall_tau = concordant / pairs;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  t.non_increasing = true;
  for (std::size_t i = 1; i < n; ++i) {
    if (errors[idx[i]] > errors[idx[i - 1]]) t.non_increasing = false;
  }
  return t;
}

void write_length_csv(std::ostream& out, const std::vector<LengthPoint>& points, bool plain) {
  out << (plain ? "train_length_s,mean_plain_error\n" : "train_length_s,mean_rel_error\n");
  std::vector<double> ls, es;
  for (const auto& p : points) {
    const double e = plain ? p.mean_plain_error : p.mean_relative_error;
    out << format_double(p.train_length) << ',' << format_double(e) << '\n';
    ls.push_back(p.train_length);
    es.push_back(e);
  }
  const auto t = trend_stats(ls, es);
  out << "# slope=" << format_double(t.slope) << '\n';
  out << "# kendall_tau=" << format_double(t.kendall_tau) << '\n';
  out << "# non_increasing=" << (t.non_increasing ? "true" : "false") << '\n';
}

std::string compare_modes_report(const std::vector<MethodSpectrum>& spectra,
                                 const std::vector<std::complex<double>>& reference, Eigen::Index n_dominant) {
  if (spectra.empty()) throw ValidationError("compare_modes_report: no spectra given");
  std::ostringstream out;
  out << "row_type,method,re,im,mode_error\n";
  std::vector<double> errors;
  for (const auto& m : spectra) errors.push_back(mode_error(m.spectrum, reference, n_dominant));
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    out << "method," << spectra[i].method << ",,," << format_double(errors[i]) << '\n';
  }
  for (const auto& m : spectra) {
    for (const auto& c : m.spectrum.modes(ModeOrdering::AxisDistance)) {
      out << "scatter," << m.method << ',' << format_double(c.real()) << ',' << format_double(c.imag()) << ",\n";
    }
  }
  for (const auto& c : sorted_modes(reference, ModeOrdering::AxisDistance, 1.0)) {
    out << "scatter,reference," << format_double(c.real()) << ',' << format_double(c.imag()) << ",\n";
  }
  return out.str();
}

}  // namespace robkoop
