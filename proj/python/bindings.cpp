// Thin numpy/JSON bridge over the C++ library. Structured results cross as
// JSON text and are decoded on the Python side.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "splitrank/error.hpp"
#include "splitrank/pipeline.hpp"
#include "splitrank/report.hpp"

namespace py = pybind11;
using namespace splitrank;

namespace {

Dataset make_dataset(const Matrix& x, const Vector& a, const Vector& y) { return Dataset::create(x, a, y); }

std::vector<double> to_std(const std::optional<Vector>& v) {
  if (!v) return {};
  return {v->data(), v->data() + v->size()};
}

py::dict simulate(const std::string& config_json, std::uint64_t cohort) {
  const auto cfg = nlohmann::json::parse(config_json).get<SimConfig>();
  const auto s = simulate_cohort(cfg, cohort);
  const auto& t = s.oracle.ground_truth();
  py::dict out;
  out["x"] = s.observed.covariates();
  out["a"] = s.observed.treatment();
  out["y"] = s.observed.outcome();
  out["z"] = t.z;
  out["true_group"] = t.true_group;
  out["true_cate"] = t.true_cate;
  out["y0"] = t.y0;
  out["y1"] = t.y1;
  out["hidden_u"] = s.hidden_u;
  out["truth_levels"] = ground_truth_rank(s.oracle);
  out["covariate_names"] = s.observed.covariate_names();
  return out;
}

py::dict weights(const Matrix& x, const Vector& a, const std::string& analysis_json) {
  const auto cfg = nlohmann::json::parse(analysis_json).get<AnalysisConfig>();
  const auto w = compute_weights(make_dataset(x, a, Vector::Zero(a.size())), cfg);
  py::dict out;
  out["weights"] = w.weights;
  out["retained"] = w.retained;
  out["scores"] = w.fit.scores;
  out["mean_weight_treated"] = w.mean_weight(1);
  out["mean_weight_control"] = w.mean_weight(0);
  out["balance_csv"] = format_balance_csv(w.balance);
  out["mean_smd_before"] = w.balance.mean_before();
  out["mean_smd_after"] = w.balance.mean_after();
  return out;
}

OutcomeModel fit(const Matrix& x, const Vector& a, const Vector& y, const std::string& family,
                 const std::optional<Vector>& w, const std::string& hyperparams_json) {
  const auto hp = nlohmann::json::parse(hyperparams_json).get<Hyperparams>();
  const auto ws = to_std(w);
  return fit_outcome_model(make_dataset(x, a, y), ws, family_from_string(family), hp);
}

py::dict ite(const OutcomeModel& m, const Matrix& x) {
  const auto t = compute_ite(m, make_dataset(x, Vector::Zero(x.rows()), Vector::Zero(x.rows())));
  py::dict out;
  out["ite"] = t.ite;
  out["y_hat_1"] = t.y_hat_1;
  out["y_hat_0"] = t.y_hat_0;
  return out;
}

py::dict rank(const Vector& ite, int levels) {
  const auto r = rank_and_bucket(ite, levels);
  py::dict out;
  out["rank"] = r.rank;
  out["level"] = r.level;
  out["order"] = r.order;
  return out;
}

py::dict confounder(const Matrix& x, const Vector& a, const Vector& y, const std::string& cfg_json) {
  const auto cfg = nlohmann::json::parse(cfg_json).get<ConfounderConfig>();
  const auto d = generate_confounder(make_dataset(x, a, y), cfg);
  py::dict out;
  out["u"] = d.u;
  out["corr_u_a"] = d.corr_u_a;
  out["corr_u_y"] = d.corr_u_y;
  out["u_star"] = std::vector<double>{d.posterior[0].u_star, d.posterior[1].u_star};
  out["eps_star"] = std::vector<double>{d.posterior[0].eps_star, d.posterior[1].eps_star};
  return out;
}

py::dict wald(const Vector& a, const Vector& y, const std::vector<int>& z, double min_first_stage) {
  IVExperiment e;
  e.data = make_dataset(Matrix::Zero(a.size(), 1), a, y);
  e.z = z;
  std::vector<Index> rows(e.n());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto w = wald_2sls(e, rows, min_first_stage);
  py::dict out;
  out["cate"] = w.cate;
  out["se"] = w.se;
  out["first_stage"] = w.first_stage;
  out["itt"] = w.itt;
  return out;
}

std::string run(const std::string& config_json, const std::optional<std::string>& out_dir) {
  const auto cfg = parse_run_config(config_json);
  const auto r = run_pipeline(cfg);
  if (out_dir) emit_report(r, *out_dir);
  return to_json(r).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "splitrank C++ core";
  m.attr("__version__") = SPLITRANK_VERSION;

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<DataError> data_error(m, "DataError", PyExc_ValueError);
  static py::exception<EstimationError> estimation_error(m, "EstimationError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const EstimationError& e) {
      py::set_error(estimation_error, e.what());
    }
  });

  py::class_<OutcomeModel>(m, "OutcomeModel")
      .def_property_readonly("family", [](const OutcomeModel& om) { return to_string(om.family()); })
      .def("predict", py::overload_cast<const Matrix&, const Vector&>(&OutcomeModel::predict, py::const_),
           py::arg("x"), py::arg("a"))
      .def("to_json", [](const OutcomeModel& om) { return nlohmann::json(om).dump(); })
      .def_static("from_json", [](const std::string& s) { return nlohmann::json::parse(s).get<OutcomeModel>(); });

  m.def("simulate", &simulate, py::arg("config_json") = "{}", py::arg("cohort") = 0);
  m.def("compute_weights", &weights, py::arg("x"), py::arg("a"), py::arg("analysis_json") = "{}");
  m.def("fit_outcome_model", &fit, py::arg("x"), py::arg("a"), py::arg("y"), py::arg("family") = "linear_wls",
        py::arg("weights") = py::none(), py::arg("hyperparams_json") = "{}");
  m.def("compute_ite", &ite, py::arg("model"), py::arg("x"));
  m.def("rank_and_bucket", &rank, py::arg("ite"), py::arg("levels") = 4);
  m.def("rank_rmse", [](const std::vector<int>& p, const std::vector<int>& t) { return rank_rmse(p, t); });
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); });
  m.def("overlap_fraction", &overlap_fraction, py::arg("baseline"), py::arg("other"));
  m.def("generate_confounder", &confounder, py::arg("x"), py::arg("a"), py::arg("y"), py::arg("config_json") = "{}");
  m.def("wald_2sls", &wald, py::arg("a"), py::arg("y"), py::arg("z"), py::arg("min_first_stage") = 0.01);
  m.def("config_hash", [](const std::string& s) { return config_hash(parse_run_config(s)); });
  m.def("run_pipeline", &run, py::arg("config_json") = "{}", py::arg("out_dir") = py::none(),
        py::call_guard<py::gil_scoped_release>());
}
