#include "robkoop/predictor.hpp"

#include "robkoop/error.hpp"
#include "robkoop/noise.hpp"
#include "robkoop/parallel.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace robkoop {

namespace {

constexpr double kProjectionRidge = 1e-12;
constexpr double kErrorEps = 1e-12;

Trajectory filled(const Trajectory& traj) { return traj.has_missing() ? interpolate_missing(traj) : traj; }

}  // namespace

ProjectionFit fit_projection(const Dictionary& dictionary, const Trajectory& traj) {
  traj.validate();
  if (traj.has_missing()) throw ValidationError("fit_projection: trajectory has absent entries");
  if (traj.dim() != dictionary.input_dim()) throw ValidationError("fit_projection: state dimension mismatch");
  const Eigen::MatrixXd f = dictionary.lift_trajectory(traj);
  const double inv = 1.0 / static_cast<double>(f.rows());
  Eigen::MatrixXd gram = inv * (f.transpose() * f);
  gram.diagonal().array() += kProjectionRidge;
  const Eigen::MatrixXd rhs = inv * (f.transpose() * traj.states);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::MatrixXd ct;
  if (ldlt.info() == Eigen::Success) ct = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !ct.allFinite()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double cond = ev(0) > 0.0 ? ev(ev.size() - 1) / ev(0) : std::numeric_limits<double>::infinity();
    throw NumericalError("fit_projection: feature Gram is rank deficient (condition estimate " +
                         format_double(cond) + ")");
  }
  ProjectionFit out;
  out.c = ct.transpose();
  const Eigen::MatrixXd resid = traj.states - f * ct;
  out.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));
  return out;
}

void Predictor::validate() const {
  model.validate();
  if (c.cols() != model.k.rows()) throw ValidationError("Predictor: C must have one column per observable");
  if (c.rows() != model.dictionary.input_dim()) throw ValidationError("Predictor: C must have one row per state");
  if (!c.allFinite()) throw ValidationError("Predictor: C has non-finite entries");
}

Predictor make_predictor(KoopmanModel model, const Trajectory& training) {
  ProjectionFit fit = fit_projection(model.dictionary, training);
  Predictor pred{std::move(model), std::move(fit.c), fit.residual_rms};
  pred.validate();
  return pred;
}

Eigen::MatrixXd rollout_lifted(const Predictor& pred, const Eigen::RowVectorXd& z0, Eigen::Index n_steps) {
  if (z0.size() != pred.model.k.rows()) throw ValidationError("rollout: lifted state has wrong length");
  if (n_steps < 0) throw ValidationError("rollout: n_steps must be non-negative");
  Eigen::MatrixXd z(n_steps + 1, z0.size());
  z.row(0) = z0;
  for (Eigen::Index m = 1; m <= n_steps; ++m) {
    z.row(m) = z.row(m - 1) * pred.model.k;
    if (!z.row(m).allFinite()) {
      throw NumericalError("predict: lifted state became non-finite at step " + std::to_string(m));
    }
  }
  return z;
}

Trajectory predict(const Predictor& pred, const Eigen::VectorXd& x0, Eigen::Index n_steps, Rollout mode,
                   double t0) {
  if (x0.size() != pred.state_dim()) {
    throw ValidationError("predict: x0 has dimension " + std::to_string(x0.size()) + ", expected " +
                          std::to_string(pred.state_dim()));
  }
  if (n_steps < 0) throw ValidationError("predict: n_steps must be non-negative");
  const auto& dict = pred.model.dictionary;
  Eigen::MatrixXd states(n_steps + 1, pred.state_dim());
  if (mode == Rollout::Lifted) {
    const Eigen::MatrixXd z = rollout_lifted(pred, dict.lift(x0).transpose(), n_steps);
    states = z * pred.c.transpose();
  } else {
    Eigen::RowVectorXd z = dict.lift(x0).transpose();
    states.row(0) = z * pred.c.transpose();
    for (Eigen::Index m = 1; m <= n_steps; ++m) {
      const Eigen::RowVectorXd x = (z * pred.model.k) * pred.c.transpose();
      if (!x.allFinite()) throw NumericalError("predict: state became non-finite at step " + std::to_string(m));
      states.row(m) = x;
      z = dict.lift(x.transpose()).transpose();
    }
  }
  if (!states.allFinite()) throw NumericalError("predict: reconstructed state is non-finite");
  return Trajectory(t0, pred.model.dt, std::move(states));
}

void DictionarySpec::validate() const {
  if (kind == DictionaryKind::Monomials && degree < 1) throw ValidationError("dictionary.degree must be >= 1");
  if (kind == DictionaryKind::GaussianRBF && n_centers < 1) {
    throw ValidationError("dictionary.n_centers must be >= 1");
  }
}

Dictionary DictionarySpec::build(const Trajectory& training) const {
  validate();
  switch (kind) {
    case DictionaryKind::StatePlusConstant: {
      auto d = Dictionary::state_plus_constant(training.dim());
      return normalize ? d.normalized_to(training) : d;
    }
    case DictionaryKind::Monomials: {
      auto d = Dictionary::monomials(training.dim(), degree);
      return normalize ? d.normalized_to(training) : d;
    }
    case DictionaryKind::GaussianRBF:
      return Dictionary::gaussian_rbf_fit(training, n_centers, seed, normalize);
  }
  throw ValidationError("dictionary: unknown kind");
}

PredictorBuilder::Fit PredictorBuilder::fit(const Trajectory& raw) const {
  const Trajectory training = filled(raw);
  training.validate();
  const Dictionary dict = dictionary.build(training);
  const Eigen::Index pairs = training.size() - 1;
  if (pairs < dict.size()) {
    throw ValidationError("training window has " + std::to_string(pairs) + " snapshot pairs but the dictionary has " +
                          std::to_string(dict.size()) +
                          " observables; use a smaller dictionary or a longer window");
  }
  const Eigen::MatrixXd features = dict.lift_trajectory(training);
  const GramPair gram = build_gram(features);
  Fit out{Predictor{}, std::nullopt};
  KoopmanModel model = [&] {
    if (estimator == Estimator::Edmd) return edmd(gram, ridge, dict, training.dt);
    double c = 0.0;
    if (c_tilde) {
      c = *c_tilde;
    } else {
      out.cv = cross_validate(features, cv);
      c = out.cv->best;
    }
    return robust_edmd(gram, c, cv.lasso, dict, training.dt);
  }();
  out.predictor = make_predictor(std::move(model), training);
  return out;
}

Trajectory PredictorBuilder::forecast(const Predictor& pred, const Trajectory& raw, Eigen::Index n_steps) const {
  const Trajectory training = filled(raw);
  if (training.empty()) throw ValidationError("forecast: empty training window");
  const Eigen::Index last = training.size() - 1;
  if (start == StartDenoise::None) {
    return predict(pred, training.states.row(last).transpose(), n_steps, rollout, training.time(last));
  }
  if (training.size() < 5) throw ValidationError("forecast: moving-average start needs at least 5 samples");
  const Eigen::VectorXd center = training.states.middleRows(last - 4, 5).colwise().mean().transpose();
  const Trajectory longer = predict(pred, center, n_steps + 2, rollout, training.time(last - 2));
  return longer.segment(2, n_steps + 1);
}

std::vector<double> relative_errors(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
                                    const Eigen::VectorXd& training_mean) {
  std::vector<double> out;
  const Eigen::Index n = predicted.rows() - 1;
  for (Eigen::Index i = 0; i < predicted.cols(); ++i) {
    if (n <= 0) {
      out.push_back(0.0);
      continue;
    }
    const double num = (predicted.col(i).tail(n) - truth.col(i).tail(n)).norm();
    const double den = (truth.col(i).tail(n).array() - training_mean(i)).matrix().norm() + kErrorEps;
    out.push_back(num / den);
  }
  return out;
}

std::vector<double> plain_errors(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  std::vector<double> out;
  const Eigen::Index n = predicted.rows() - 1;
  for (Eigen::Index i = 0; i < predicted.cols(); ++i) {
    if (n <= 0) {
      out.push_back(0.0);
      continue;
    }
    const double num = (predicted.col(i).tail(n) - truth.col(i).tail(n)).norm();
    out.push_back(num / (truth.col(i).tail(n).norm() + kErrorEps));
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

ForecastReport single_window_forecast(const PredictorBuilder& builder, const Trajectory& data,
                                      const Trajectory* clean, Eigen::Index first, Eigen::Index train_steps,
                                      Eigen::Index horizon_steps) {
  if (first < 0 || train_steps < 1 || horizon_steps < 0 || first + train_steps + horizon_steps > data.size() - 1) {
    throw ValidationError("forecast window [" + format_double(data.time(std::max<Eigen::Index>(first, 0))) + " s, +" +
                          format_double(static_cast<double>(train_steps + horizon_steps) * data.dt) +
                          " s] does not fit in a trajectory of " + format_double(data.duration()) + " s");
  }
  if (clean && (clean->size() != data.size() || clean->dim() != data.dim())) {
    throw ValidationError("forecast: clean truth must match the data in length and dimension");
  }
  const Trajectory training = filled(data.segment(first, train_steps + 1));
  const auto fit = builder.fit(training);

  ForecastReport rep;
  rep.window_start = data.time(first);
  rep.horizon = static_cast<double>(horizon_steps) * data.dt;
  rep.training_pairs = train_steps;
  rep.c_tilde = fit.predictor.model.c_tilde;
  rep.predicted = builder.forecast(fit.predictor, training, horizon_steps);
  if (clean) {
    rep.truth = clean->segment(first + train_steps, horizon_steps + 1);
    const Eigen::VectorXd mean = training.states.colwise().mean().transpose();
    rep.per_state_relative_error = relative_errors(rep.predicted.states, rep.truth->states, mean);
    rep.per_state_plain_error = plain_errors(rep.predicted.states, rep.truth->states);
    rep.mean_relative_error = mean_of(rep.per_state_relative_error);
    rep.mean_plain_error = mean_of(rep.per_state_plain_error);
  } else {
    rep.mean_relative_error = std::numeric_limits<double>::quiet_NaN();
    rep.mean_plain_error = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

std::vector<ForecastReport> rolling_forecast(const PredictorBuilder& builder, const Trajectory& data,
                                             double train_window, double horizon, const Trajectory* clean,
                                             int jobs) {
  if (!(train_window > 0.0) || !(horizon >= 0.0)) {
    throw ValidationError("rolling_forecast: train_window must be positive and horizon non-negative");
  }
  const Eigen::Index n_train = steps_for(train_window, data.dt);
  const Eigen::Index n_h = steps_for(horizon, data.dt);
  if (n_h == 0) return {};
  if (n_train + n_h > data.size() - 1) {
    throw ValidationError("rolling_forecast: train_window + horizon = " + format_double(train_window + horizon) +
                          " s exceeds the trajectory duration " + format_double(data.duration()) + " s");
  }
  std::vector<Eigen::Index> starts;
  for (Eigen::Index s = 0; s + n_train + n_h <= data.size() - 1; s += n_h) starts.push_back(s);
  std::vector<ForecastReport> out(starts.size());
  parallel_for(starts.size(), jobs, [&](std::size_t i) {
    out[i] = single_window_forecast(builder, data, clean, starts[i], n_train, n_h);
  });
  return out;
}

std::vector<LengthPoint> error_vs_training_length(const PredictorBuilder& builder, const Trajectory& noisy,
                                                  const Trajectory& clean, const std::vector<double>& lengths,
                                                  double horizon, int jobs) {
  if (lengths.empty()) throw ValidationError("error_vs_training_length: no training lengths given");
  if (!(horizon > 0.0)) throw ValidationError("error_vs_training_length: horizon must be positive");
  const Eigen::Index n_h = steps_for(horizon, noisy.dt);
  for (double l : lengths) {
    if (!(l > 0.0)) throw ValidationError("error_vs_training_length: lengths must be positive");
    if (steps_for(l, noisy.dt) + n_h > noisy.size() - 1) {
      throw ValidationError("error_vs_training_length: length " + format_double(l) + " s + horizon " +
                            format_double(horizon) + " s exceeds the trajectory duration " +
                            format_double(noisy.duration()) + " s");
    }
  }
  std::vector<LengthPoint> out(lengths.size());
  parallel_for(lengths.size(), jobs, [&](std::size_t i) {
    LengthPoint p;
    p.train_length = lengths[i];
    p.report = single_window_forecast(builder, noisy, &clean, 0, steps_for(lengths[i], noisy.dt), n_h);
    p.mean_relative_error = p.report.mean_relative_error;
    p.mean_plain_error = p.report.mean_plain_error;
    out[i] = std::move(p);
  });
  return out;
}

}  // namespace robkoop
