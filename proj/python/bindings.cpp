#include "robkoop/dynamics.hpp"
#include "robkoop/error.hpp"
#include "robkoop/harness.hpp"
#include "robkoop/io.hpp"
#include "robkoop/noise.hpp"
#include "robkoop/operator.hpp"
#include "robkoop/predictor.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace robkoop;

namespace {

py::dict spectrum_dict(const Spectrum& s) {
  py::dict d;
  d["discrete"] = s.discrete;
  d["continuous"] = s.continuous;
  d["dominance_order"] = s.dominance_order;
  d["modes"] = s.modes();
  d["constant_mode"] = s.constant_mode ? py::cast(*s.constant_mode) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust Koopman operator identification (C++ core)";
  m.attr("__version__") = version();

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<double, double, Eigen::MatrixXd>(), py::arg("t0"), py::arg("dt"), py::arg("states"))
      .def_readwrite("t0", &Trajectory::t0)
      .def_readwrite("dt", &Trajectory::dt)
      .def_readwrite("states", &Trajectory::states)
      .def_property_readonly("times", [](const Trajectory& t) {
        Eigen::VectorXd times(t.size());
        for (Eigen::Index k = 0; k < t.size(); ++k) times(k) = t.time(k);
        return times;
      })
      .def("__len__", &Trajectory::size)
      .def("segment", &Trajectory::segment)
      .def("to_csv", [](const Trajectory& t) {
        std::ostringstream ss;
        write_csv(ss, t);
        return ss.str();
      });

  py::class_<FaultEvent>(m, "FaultEvent")
      .def(py::init([](double apply, double clear, Eigen::Index bus, double scale) {
             FaultEvent f{apply, clear, bus, scale};
             f.validate();
             return f;
           }),
           py::arg("apply_time"), py::arg("clear_time"), py::arg("target_bus"), py::arg("admittance_scale") = 0.0);

  py::class_<DynamicsModel>(m, "DynamicsModel")
      .def_static("linear_map", &DynamicsModel::linear_map, py::arg("a"))
      .def_static("van_der_pol", &DynamicsModel::van_der_pol, py::arg("mu"))
      .def_static("swing_benchmark", [] { return DynamicsModel::swing_network(benchmark_swing_network()); })
      .def_property_readonly("state_dim", &DynamicsModel::state_dim)
      .def("vector_field", [](const DynamicsModel& d, const Eigen::VectorXd& x) { return d.vector_field(x); })
      .def("jacobian", &DynamicsModel::jacobian);

  m.def("simulate",
        [](const DynamicsModel& model, const Eigen::VectorXd& x0, double dt, Eigen::Index n_steps,
           const std::vector<FaultEvent>& faults, int substeps) {
          SimulationOptions o;
          o.substeps = substeps;
          return simulate(model, x0, dt, n_steps, faults, o);
        },
        py::arg("model"), py::arg("x0"), py::arg("dt"), py::arg("n_steps"), py::arg("faults") = std::vector<FaultEvent>{},
        py::arg("substeps") = 1);
  m.def("equilibrium", [](const DynamicsModel& model, const Eigen::VectorXd& guess) { return equilibrium(model, guess); });
  m.def("linearize", &linearize, py::arg("model"), py::arg("x_eq"), py::arg("dt"));

  m.def("corrupt",
        [](const Trajectory& t, std::optional<double> snr_db, double missing, double outliers, std::uint64_t seed) {
          NoiseSpec s;
          s.snr_db = snr_db;
          s.missing_fraction = missing;
          s.outlier_fraction = outliers;
          s.seed = seed;
          return corrupt(t, s);
        },
        py::arg("traj"), py::arg("snr_db") = py::none(), py::arg("missing_fraction") = 0.0,
        py::arg("outlier_fraction") = 0.0, py::arg("seed") = 0);
  m.def("interpolate_missing", &interpolate_missing);
  m.def("realized_snr_db", &realized_snr_db);

  py::class_<Dictionary>(m, "Dictionary")
      .def_static("state_plus_constant", &Dictionary::state_plus_constant)
      .def_static("monomials", &Dictionary::monomials, py::arg("input_dim"), py::arg("degree"))
      .def_static("gaussian_rbf", &Dictionary::gaussian_rbf, py::arg("centers"), py::arg("bandwidth"))
      .def("normalized_to", &Dictionary::normalized_to)
      .def_property_readonly("size", &Dictionary::size)
      .def_property_readonly("input_dim", &Dictionary::input_dim)
      .def("lift", &Dictionary::lift)
      .def("lift_trajectory", &Dictionary::lift_trajectory)
      .def("__repr__", &Dictionary::describe);

  py::class_<GramPair>(m, "GramPair")
      .def_readonly("g", &GramPair::g)
      .def_readonly("a", &GramPair::a)
      .def_readonly("n_pairs", &GramPair::n_pairs);
  m.def("build_gram", py::overload_cast<const Eigen::MatrixXd&>(&build_gram), py::arg("features"));

  py::class_<KoopmanModel>(m, "KoopmanModel")
      .def_readonly("k", &KoopmanModel::k)
      .def_readonly("dt", &KoopmanModel::dt)
      .def_readonly("c_tilde", &KoopmanModel::c_tilde)
      .def_readonly("dictionary", &KoopmanModel::dictionary)
      .def("to_csv", [](const KoopmanModel& k) {
        std::ostringstream ss;
        write_model(ss, k);
        return ss.str();
      });
  m.def("edmd", &edmd, py::arg("gram"), py::arg("ridge"), py::arg("dictionary"), py::arg("dt"));
  m.def("robust_edmd",
        [](const GramPair& g, double c, const Dictionary& d, double dt) { return robust_edmd(g, c, {}, d, dt); },
        py::arg("gram"), py::arg("c_tilde"), py::arg("dictionary"), py::arg("dt"));
  m.def("lasso_c_max", &lasso_c_max);
  m.def("cross_validate", [](const Eigen::MatrixXd& features) {
    const auto r = cross_validate(features);
    py::dict d;
    d["grid"] = r.grid;
    d["errors"] = r.errors;
    d["best"] = r.best;
    d["c_max"] = r.c_max;
    return d;
  });
  m.def("spectrum", [](const KoopmanModel& k) { return spectrum_dict(spectrum(k)); });
  m.def("mode_error", [](const KoopmanModel& k, const std::vector<std::complex<double>>& ref, Eigen::Index n) {
    return mode_error(spectrum(k), ref, n);
  });
  m.def("continuous_eigenvalues", &continuous_eigenvalues);

  py::class_<Predictor>(m, "Predictor")
      .def(py::init(&make_predictor), py::arg("model"), py::arg("training"))
      .def_readonly("c", &Predictor::c)
      .def_readonly("projection_residual", &Predictor::projection_residual)
      .def("predict",
           [](const Predictor& p, const Eigen::VectorXd& x0, Eigen::Index n, bool relift) {
             return predict(p, x0, n, relift ? Rollout::Relift : Rollout::Lifted);
           },
           py::arg("x0"), py::arg("n_steps"), py::arg("relift") = false);

  m.def("run_config",
        [](const std::string& config_json, const std::string& output_dir, int jobs) {
          nlohmann::json j;
          try {
            j = nlohmann::json::parse(config_json);
          } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("config: ") + e.what());
          }
          const auto cfg = parse_config(j);
          RunOptions o;
          o.output_dir = output_dir;
          o.jobs = jobs;
          py::gil_scoped_release release;
          return run(cfg, o).to_json().dump();
        },
        py::arg("config_json"), py::arg("output_dir"), py::arg("jobs") = 1);
}
