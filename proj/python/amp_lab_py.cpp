#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "amp_lab/errors.hpp"
#include "amp_lab/free_probability.hpp"
#include "amp_lab/harness.hpp"

namespace py = pybind11;
using namespace amp_lab;

namespace {

ExperimentConfig config_from(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("configuration is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

py::dict state_dict(const SeState& s) {
  py::dict d;
  d["t"] = s.t;
  d["mse"] = s.mse;
  d["mse_stderr"] = s.mse_stderr;
  d["overlap"] = s.overlap;
  d["Sigma"] = s.Sigma;
  d["Phi"] = s.Phi;
  d["DeltaBar"] = s.DeltaBar;
  d["alpha"] = s.alpha;
  d["beta"] = s.beta;
  return d;
}

py::list trajectory_list(const SeTrajectory& se) {
  py::list out;
  for (const auto& s : se.states) out.append(state_dict(s));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the amp_lab C++ library.";

  static py::exception<Error> base(m, "AmpLabError", PyExc_RuntimeError);
  static py::exception<ValidationError> validation(m, "ValidationError", base.ptr());
  static py::exception<NumericalFailure> numerical(m, "NumericalFailure", base.ptr());
  static py::exception<UnsupportedVariant> unsupported(m, "UnsupportedVariant", validation.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UnsupportedVariant& e) {
      py::set_error(unsupported, e.what());
    } catch (const ValidationError& e) {
      py::set_error(validation, e.what());
    } catch (const NumericalFailure& e) {
      py::set_error(numerical, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "moments",
      [](const std::string& law, int order) {
        const SpectralLaw l = parse_law(law);
        std::vector<double> out;
        for (int n = 1; n <= order; ++n) out.push_back(moment(l, n));
        return out;
      },
      py::arg("law"), py::arg("order"), "Moments m_1..m_order of a law given by its spec string.");
  m.def(
      "free_cumulants",
      [](const std::string& law, int order) {
        const SpectralLaw l = parse_law(law);
        std::vector<double> ms;
        for (int n = 1; n <= order; ++n) ms.push_back(moment(l, n));
        return moments_to_cumulants(ms).cumulants;
      },
      py::arg("law"), py::arg("order"));
  m.def(
      "moments_to_cumulants", [](const std::vector<double>& ms) { return moments_to_cumulants(ms).cumulants; },
      py::arg("moments"));
  m.def("cumulants_to_moments", &cumulants_to_moments_nc, py::arg("cumulants"));
  m.def(
      "cumulants_table",
      [](const std::string& law, int order) {
        CumulantsRequest r;
        r.law = law;
        r.order = order;
        std::ostringstream os;
        cmd_cumulants(r, os);
        return os.str();
      },
      py::arg("law"), py::arg("order") = 6, "CSV text with columns n,m_n,kappa_n.");

  m.def(
      "normalize_config", [](const std::string& text) { return config_to_json(config_from(text)).dump(); },
      py::arg("config_json"));
  m.def(
      "state_evolution",
      [](const std::string& text) {
        const ExperimentConfig c = config_from(text);
        SeTrajectory se;
        {
          py::gil_scoped_release release;
          se = cmd_se(c);
        }
        return trajectory_list(se);
      },
      py::arg("config_json"));
  m.def(
      "run",
      [](const std::string& text, int threads) {
        const ExperimentConfig c = config_from(text);
        MseReport r;
        {
          py::gil_scoped_release release;
          r = cmd_run(c, threads);
        }
        py::list rows;
        for (const auto& row : r.rows) {
          py::dict d;
          d["t"] = row.t;
          d["mse_emp_mean"] = row.mse_emp_mean;
          d["mse_emp_stderr"] = row.mse_emp_stderr;
          d["mse_se_pred"] = row.mse_se_pred;
          d["overlap_emp_mean"] = row.overlap_emp_mean;
          d["overlap_emp_stderr"] = row.overlap_emp_stderr;
          d["overlap_se_pred"] = row.overlap_se_pred;
          rows.append(d);
        }
        py::dict out;
        out["rows"] = rows;
        out["runs_ok"] = r.runs_ok;
        out["runs_failed"] = r.runs_failed;
        out["se"] = trajectory_list(r.se);
        return out;
      },
      py::arg("config_json"), py::arg("threads") = 0);
  m.def(
      "verify",
      [](const std::string& suite) {
        VerifyReport rep;
        {
          py::gil_scoped_release release;
          rep = cmd_verify(suite);
        }
        return rep.to_json().dump();
      },
      py::arg("suite") = "all");
}
