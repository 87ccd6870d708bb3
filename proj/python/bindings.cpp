#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "panelreg/dataset.hpp"
#include "panelreg/design.hpp"
#include "panelreg/error.hpp"
#include "panelreg/harness.hpp"
#include "panelreg/interpret.hpp"
#include "panelreg/metrics.hpp"
#include "panelreg/models.hpp"
#include "panelreg/preprocess.hpp"
#include "panelreg/serialize.hpp"
#include "panelreg/split.hpp"
#include "panelreg/synthgen.hpp"

namespace py = pybind11;
using namespace panelreg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(std::span<const double> v) {
  // Copies: no base handle is given.
  return Array(static_cast<py::ssize_t>(v.size()), v.data());
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw InputError("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw InputError("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

Array matrix_to_array(const Matrix& m) {
  return Array({static_cast<py::ssize_t>(m.rows), static_cast<py::ssize_t>(m.cols)}, m.data.data());
}

std::vector<ModelSpec> specs_from_json(const std::string& text) {
  if (text.empty()) return default_model_specs();
  return parse_model_specs(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compiled core of panelreg: panel preprocessing, regression models and interpretation.";

  static py::exception<InputError> input_error(m, "InputError", PyExc_ValueError);
  static py::exception<ModelError> model_error(m, "ModelError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ModelError& e) {
      PyErr_SetString(model_error.ptr(), e.what());
    } catch (const InputError& e) {
      PyErr_SetString(input_error.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(input_error.ptr(), e.what());
    }
  });

  py::enum_<ResponseLaw>(m, "ResponseLaw")
      .value("linear", ResponseLaw::kLinear)
      .value("friedman", ResponseLaw::kFriedman)
      .value("step_interaction", ResponseLaw::kStepInteraction);

  py::class_<PanelConfig>(m, "PanelConfig")
      .def(py::init<>())
      .def_readwrite("n_counties", &PanelConfig::n_counties)
      .def_readwrite("year_first", &PanelConfig::year_first)
      .def_readwrite("year_last", &PanelConfig::year_last)
      .def_readwrite("n_features", &PanelConfig::n_features)
      .def_readwrite("response_law", &PanelConfig::response_law)
      .def_readwrite("noise_sd", &PanelConfig::noise_sd)
      .def_readwrite("urban_fraction", &PanelConfig::urban_fraction)
      .def_readwrite("seed", &PanelConfig::seed)
      .def_property_readonly("n_rows", &PanelConfig::n_rows)
      .def("__repr__", [](const PanelConfig& c) { return "PanelConfig(\n" + format_panel_config(c) + ")"; });

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_rows", &Dataset::n_rows)
      .def_property_readonly("columns",
                             [](const Dataset& d) {
                               std::vector<std::string> names;
                               for (const auto& s : d.schema()) names.push_back(s.name);
                               return names;
                             })
      .def_property_readonly("feature_names", &Dataset::feature_names)
      .def("has_column", [](const Dataset& d, const std::string& name) { return d.has_column(name); })
      .def("values", [](const Dataset& d, const std::string& name) { return to_array(d.values(name)); })
      .def("labels", [](const Dataset& d, const std::string& name) { return d.labels(name); })
      .def("missing_count", [](const Dataset& d, const std::string& name) { return d.missing_count(name); })
      .def("to_csv",
           [](const Dataset& d) {
             std::ostringstream out;
             write_csv(d, out);
             return out.str();
           })
      .def("schema_text", [](const Dataset& d) { return format_schema(d.schema()); })
      .def("lineage_json", [](const Dataset& d) { return lineage_to_json(d.lineage()).dump(); })
      .def("__len__", &Dataset::n_rows);

  m.def("generate", &generate, py::arg("config"));
  m.def("inject_missing", &inject_missing, py::arg("dataset"), py::arg("column"), py::arg("fraction"), py::arg("seed"));
  m.def(
      "load_csv",
      [](const std::string& path, const std::string& schema_path) { return load_csv(path, read_schema_file(schema_path)); },
      py::arg("path"), py::arg("schema_path"));
  m.def(
      "parse_csv",
      [](const std::string& text, const std::string& schema_text) {
        std::istringstream in(text);
        return parse_csv(in, parse_schema(schema_text));
      },
      py::arg("text"), py::arg("schema_text"));
  m.def("join_on_keys", &join_on_keys, py::arg("left"), py::arg("right"));
  m.def("normalize_rate", &normalize_rate, py::arg("dataset"), py::arg("per") = 1.0e5, py::arg("response_name") = "rate");
  m.def("drop_sparse_columns", &drop_sparse_columns, py::arg("dataset"), py::arg("max_missing_frac") = 0.20);
  m.def("prune_correlated", &prune_correlated, py::arg("dataset"), py::arg("threshold") = 0.9);
  m.def(
      "partition_by_urbanization",
      [](const Dataset& d, const std::string& column) { return partition_by_urbanization(d, column); },
      py::arg("dataset"), py::arg("column") = "urbanization");

  py::class_<DesignMatrix>(m, "DesignMatrix")
      .def(py::init([](std::vector<std::string> names, const Array& x, const Array& y) {
             return DesignMatrix(std::move(names), to_matrix(x), to_vector(y));
           }),
           py::arg("feature_names"), py::arg("features"), py::arg("response"))
      .def_static("from_dataset", &DesignMatrix::from_dataset, py::arg("dataset"))
      .def_property_readonly("n_rows", &DesignMatrix::n_rows)
      .def_property_readonly("feature_names", &DesignMatrix::feature_names)
      .def_property_readonly("features", [](const DesignMatrix& d) { return matrix_to_array(d.features()); })
      .def_property_readonly("response", [](const DesignMatrix& d) { return to_array(d.response()); });

  py::class_<FittedModel>(m, "FittedModel")
      .def_property_readonly("kind", [](const FittedModel& f) { return std::string(to_string(f.kind())); })
      .def_property_readonly("feature_names", &FittedModel::feature_names)
      .def("predict", [](const FittedModel& f, const Array& x) { return to_array(predict(f, to_matrix(x))); })
      .def("to_json", [](const FittedModel& f) { return model_to_json(f).dump(); })
      .def_static("from_json", [](const std::string& text) { return model_from_json(nlohmann::json::parse(text)); });

  m.def(
      "fit_model",
      [](const DesignMatrix& d, const std::string& kind, const std::map<std::string, double>& params,
         std::uint64_t seed, std::size_t threads) {
        ModelSpec spec{"model", parse_model_kind(kind), params};
        parse_model_specs(model_specs_to_json({spec}));  // rejects unknown parameters
        return fit_model(spec, d, seed, threads);
      },
      py::arg("design"), py::arg("kind"), py::arg("params") = std::map<std::string, double>{}, py::arg("seed") = 0,
      py::arg("threads") = 1);

  m.def("mae", [](const Array& y, const Array& yhat) { return mae(to_vector(y), to_vector(yhat)); });
  m.def("rmse", [](const Array& y, const Array& yhat) { return rmse(to_vector(y), to_vector(yhat)); });
  m.def("r_squared", [](const Array& y, const Array& yhat) { return r_squared(to_vector(y), to_vector(yhat)); });
  m.def("pearson", [](const Array& x, const Array& y) { return pearson(to_vector(x), to_vector(y)); });
  m.def("normal_quantile", &normal_quantile, py::arg("p"));

  m.def(
      "variable_importance",
      [](const FittedModel& f) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& e : variable_importance(f).entries) out.emplace_back(e.feature, e.proportion);
        return out;
      },
      py::arg("model"));
  m.def(
      "partial_dependence",
      [](const FittedModel& f, const DesignMatrix& d, const std::string& feature, std::size_t grid_size,
         std::size_t threads) {
        PDPCurve c = partial_dependence(f, d, feature, grid_size, threads);
        py::dict out;
        out["feature"] = c.feature;
        out["grid"] = to_array(c.grid);
        out["mean"] = to_array(c.mean_effect);
        out["lo"] = to_array(c.band_low);
        out["hi"] = to_array(c.band_high);
        out["has_band"] = c.has_band;
        out["rug"] = to_array(c.rug);
        return out;
      },
      py::arg("model"), py::arg("design"), py::arg("feature"), py::arg("grid_size") = 51, py::arg("threads") = 1);
  m.def(
      "qq_residuals",
      [](const Array& y, const Array& yhat) {
        QQDiagnostic q = qq_residuals(to_vector(y), to_vector(yhat));
        py::dict out;
        out["theoretical"] = to_array(q.theoretical);
        out["sample"] = to_array(q.sample);
        out["lo"] = to_array(q.band_low);
        out["hi"] = to_array(q.band_high);
        out["fraction_inside"] = q.fraction_inside();
        return out;
      },
      py::arg("y"), py::arg("yhat"));

  m.def(
      "run_experiment_json",
      [](const Dataset& d, const std::string& models_json, std::size_t iterations, double test_fraction,
         std::uint64_t seed, std::size_t threads, double fit_weight) {
        auto specs = specs_from_json(models_json);
        SplitPlan plan;
        ExperimentReport report;
        {
          py::gil_scoped_release release;
          plan = make_split_plan(d.n_rows(), iterations, test_fraction, seed);
          report = run_experiment(d, specs, plan, threads);
        }
        try {
          report.selection = select_final_model(report, fit_weight);
        } catch (const InputError&) {
          // No eligible model: the report still carries every error row.
        }
        return report_to_json(report).dump();
      },
      py::arg("dataset"), py::arg("models_json") = "", py::arg("iterations") = 30, py::arg("test_fraction") = 0.2,
      py::arg("seed") = 0, py::arg("threads") = 1, py::arg("fit_weight") = kDefaultFitWeight);
  m.def("default_models_json", [] { return model_specs_to_json(default_model_specs()).dump(); });
}
