#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cli.hpp"
#include "koopnet/analysis.hpp"
#include "koopnet/io.hpp"
#include "koopnet/training.hpp"

namespace py = pybind11;
using namespace koopnet;

namespace {

ExperimentConfig parse_config(const std::string& text) {
  try {
    return config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

Matrix stacked(const Dataset& d) {
  if (d.trajectories.empty()) return Matrix(0, d.system.state_dim);
  const Index T = d.trajectories.front().states.rows();
  Matrix x(static_cast<Index>(d.size()) * T, d.system.state_dim);
  for (std::size_t i = 0; i < d.size(); ++i)
    x.middleRows(static_cast<Index>(i) * T, T) = d.trajectories[i].states;
  return x;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Koopman autoencoders with state-dependent eigenvalues";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ArchitectureError>(m, "ArchitectureError", base.ptr());
  py::register_exception<CacheError>(m, "CacheError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<IntegrationError>(m, "IntegrationError", base.ptr());
  py::register_exception<SamplingError>(m, "SamplingError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  // ------------------------------------------------------------ dynamics

  m.def("system_info", [](const std::string& name) {
    const auto s = SystemSpec::make(system_kind_from_string(name));
    py::dict d;
    d["name"] = s.name();
    d["dt"] = s.dt;
    d["traj_len"] = s.traj_len;
    d["state_dim"] = s.state_dim;
    return d;
  });
  m.def("rhs", [](const std::string& system, const Vector& x) {
    return rhs(SystemSpec::make(system_kind_from_string(system)), x);
  });
  m.def(
      "integrate",
      [](const std::string& system, const Vector& x0, int length, int substeps) {
        return integrate(SystemSpec::make(system_kind_from_string(system)), x0, substeps, length).states;
      },
      py::arg("system"), py::arg("x0"), py::arg("length") = 0, py::arg("substeps") = kDefaultSubsteps);
  m.def("closed_form_discrete", &closed_form_discrete, py::arg("x0"), py::arg("t"),
        py::arg("mu") = -0.05, py::arg("lam") = -1.0);
  m.def("pendulum_energy", &pendulum_energy);

  py::class_<Dataset>(m, "Dataset")
      .def_static(
          "generate",
          [](const std::string& system, const std::string& split, int n, std::uint64_t seed) {
            py::gil_scoped_release release;
            return generate_dataset(SystemSpec::make(system_kind_from_string(system)),
                                    split_from_string(split), n, seed);
          },
          py::arg("system"), py::arg("split"), py::arg("n"), py::arg("seed"))
      .def_static("load", &load_dataset)
      .def("save", [](const Dataset& d, const std::filesystem::path& dir) { save_dataset(d, dir); })
      .def_property_readonly("system", [](const Dataset& d) { return d.system.name(); })
      .def_property_readonly("split", [](const Dataset& d) { return std::string(to_string(d.split)); })
      .def_property_readonly("seed", [](const Dataset& d) { return d.seed; })
      .def_property_readonly("dt", [](const Dataset& d) { return d.system.dt; })
      .def("__len__", &Dataset::size)
      .def("trajectory",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.size()) throw py::index_error("trajectory index out of range");
             return d.trajectories[i].states;
           })
      .def("states", &stacked, "Every snapshot, trajectory-major, one per row.");

  // ------------------------------------------------------------- koopman

  m.def("jordan_block", [](double mu, double omega, double dt) -> Matrix {
    return jordan_block(mu, omega, dt);
  });

  py::class_<KoopmanModel>(m, "Model")
      .def_static(
          "create",
          [](const std::string& config, std::uint64_t seed) {
            const auto cfg = parse_config(config);
            const auto spec = SystemSpec::make(cfg.system);
            auto model = make_model(cfg.architecture, spec.dt, seed, spec.name());
            model.eigenvalue_source = cfg.eigenvalue_source;
            return model;
          },
          py::arg("config"), py::arg("seed") = 0)
      .def_static("load", &load_model)
      .def_static("from_json", &model_from_json)
      .def("save", [](const KoopmanModel& mdl, const std::filesystem::path& p) { save_model(mdl, p); })
      .def("to_json", &model_to_json)
      .def_property_readonly("state_dim", &KoopmanModel::state_dim)
      .def_property_readonly("latent_dim", &KoopmanModel::latent_dim)
      .def_property_readonly("complex_pairs", [](const KoopmanModel& mdl) { return mdl.spectrum.complex_pairs; })
      .def_property_readonly("real_eigs", [](const KoopmanModel& mdl) { return mdl.spectrum.real_eigs; })
      .def_property_readonly("parameter_count", &KoopmanModel::parameter_count)
      .def_property_readonly("dt", [](const KoopmanModel& mdl) { return mdl.dt; })
      .def_property_readonly("system", [](const KoopmanModel& mdl) { return mdl.system; })
      .def("encode", [](const KoopmanModel& mdl, const Matrix& x) { return encode(mdl, x); })
      .def("decode", [](const KoopmanModel& mdl, const Matrix& y) { return decode(mdl, y); })
      .def("eigenvalues", [](const KoopmanModel& mdl, const Matrix& y) { return eigenvalue_table(mdl, y); },
           "One row per latent point: (mu, omega) per pair, then each real eigenvalue.")
      .def("advance", [](const KoopmanModel& mdl, const Matrix& y) { return advance_batch(mdl, y); })
      .def("predict", &predict_states, py::arg("x0"), py::arg("steps"))
      .def("horizon", [](const KoopmanModel& mdl, const Matrix& states) {
        return prediction_horizon(mdl, Trajectory{states, mdl.dt});
      });

  // ------------------------------------------------------------ training

  m.def("preset_names", &preset_names);
  m.def("preset_json", [](const std::string& name) { return config_to_json(preset(name)).dump(); });
  m.def(
      "train",
      [](const std::string& config, const Dataset& train_set, const Dataset& val_set,
         const Dataset* test_set) {
        const auto cfg = parse_config(config);
        py::gil_scoped_release release;
        auto result = run_experiment(cfg, train_set, val_set, test_set);
        return std::make_pair(std::move(result.model), cli::report_to_json(cfg, result.report).dump());
      },
      py::arg("config"), py::arg("train"), py::arg("validation"), py::arg("test") = nullptr);

  // ------------------------------------------------------------ analysis

  m.def("evaluate", [](const KoopmanModel& mdl, const std::vector<const Dataset*>& datasets,
                       const std::string& config) {
    const auto cfg = parse_config(config);
    py::gil_scoped_release release;
    return evaluate_model(mdl, datasets, cfg.weights).to_json().dump();
  });
  m.def("spearman", &spearman);

  // ----------------------------------------------------------------- cli

  m.def("run", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
