#ifndef AMP_LAB_HARNESS_HPP
#define AMP_LAB_HARNESS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "amp_lab/amp_engines.hpp"
#include "amp_lab/state_evolution.hpp"

namespace amp_lab {

// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2, kExitVerification = 3 };
int exit_code_for(const std::exception& e);

// Law strings: "semicircle[:variance]", "goe", "mp:alpha", "point:c",
// "grid:a,b,c,...", "file:path" (atoms or a tabulated density).
SpectralLaw parse_law(const std::string& spec);
// Matrix functions: "identity", "mp-denoise[:alpha]", "poly:c0,c1,...",
// "file:path" (two columns, linear interpolation, undefined outside the table).
ScalarFn parse_matrix_fn(const std::string& spec, const SpectralLaw& law, double theta);
// "rademacher", "gaussian", "sparse:p".
Prior parse_prior(const std::string& spec);
Variant parse_algo(const std::string& name);

struct ExperimentConfig {
  std::string mode = "spiked";  // "spiked" or "null"
  std::string law = "mp:0.2";
  int N = 2000;
  int T = 6;
  double theta = 1.5;
  double omega = 0.3;
  int runs = 20;
  std::uint64_t seed_base = 1;
  std::string algo = "ri-amp-mp";
  // "mmse-combining" (alias "linear-mmse-combining"), "mmse" (last iterate only),
  // "mmse-rademacher", "tanh", "random-lipschitz", "identity".
  std::string denoiser = "mmse-combining";
  std::string prior = "rademacher";
  std::string matrix_fn = "mp-denoise";
  // "grid": run centering from the realized quantile spectrum; "population": from the law.
  std::string cumulant_source = "grid";
  std::string spectrum = "quantile";
  ExpectationConfig expectation;
  // "auto", "analytic" or "empirical".
  std::string nu = "auto";
  std::string output;
  bool svg = true;

  bool spiked() const { return mode == "spiked"; }
};

// Strict parsing: unknown keys and ill-typed values raise ValidationError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);
void validate_config(const ExperimentConfig& c);

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<double> mse;      // (1/N) ||u_{t+1} - x*||^2, t = 1..T
  std::vector<double> overlap;  // (1/N) u_{t+1} . x*
  double top_eigenvalue = 0.0;
  double nu_first_moment = 0.0;
};

struct MseRow {
  int t = 0;
  double mse_emp_mean = 0.0;
  double mse_emp_stderr = 0.0;
  double mse_se_pred = 0.0;
  double overlap_emp_mean = 0.0;
  double overlap_emp_stderr = 0.0;
  double overlap_se_pred = 0.0;
};

struct MseReport {
  std::vector<MseRow> rows;
  std::vector<SeedResult> seeds;
  int runs_ok = 0;
  int runs_failed = 0;
  SeTrajectory se;
};

// State evolution for the configured experiment (no matrix sampling unless the
// empirical overlap measure is requested).
SeTrajectory cmd_se(const ExperimentConfig& c);
// Samples `runs` instances, runs the configured algorithm with the denoisers
// chosen by the state evolution, and aggregates per-iteration statistics.
MseReport cmd_run(const ExperimentConfig& c, int threads = 0);
// One seed of cmd_run, with the denoiser schedule already fixed.
SeedResult run_seed(const ExperimentConfig& c, std::uint64_t seed, const DenoiserSchedule& eta);
std::vector<OverlapMeasure> sample_overlap_measures(const ExperimentConfig& c, int threads = 0);

void write_mse_csv(const MseReport& r, std::ostream& out);
void write_mse_svg(const MseReport& r, std::ostream& out);
// Writes mse.csv (when a report is given), se.csv, mse.svg and meta.json into dir.
void write_outputs(const std::string& dir, const ExperimentConfig& c, const SeTrajectory& se,
                   const MseReport* report);

std::string sha1_hex(const std::string& data);
// SHA-1 of "blob <size>\0<content>", the object id git assigns to a file.
std::string git_blob_hash(const std::string& content);

struct CumulantsRequest {
  std::string law;          // law spec, ignored when matrix_path is set
  std::string matrix_path;  // binary matrix file
  int order = 6;
  bool mc = false;
  int dim = 2000;
  std::uint64_t seed = 1;
  int replicas = 5;
};
// Columns n,m_n,kappa_n, plus kappa_hat_n,kappa_spread_n in Monte Carlo mode.
void cmd_cumulants(const CumulantsRequest& req, std::ostream& out);

struct VerifyCheck {
  std::string suite;
  std::string name;
  double observed = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool pass() const;
  nlohmann::json to_json() const;
};

struct VerifyOptions {
  // Perturbs the second centering constant of the grid-mode runs.
  bool tamper = false;
  double tamper_delta = 1e-3;
  int threads = 0;
};

// Suites: cumulants, unfolding, se-equivalence, orthogonality, all.
VerifyReport cmd_verify(const std::string& suite, const VerifyOptions& opts = {});

}  // namespace amp_lab

#endif
