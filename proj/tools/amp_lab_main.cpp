#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "amp_lab/errors.hpp"
#include "amp_lab/harness.hpp"

namespace {

using namespace amp_lab;

int do_run(const std::string& config, const std::string& out_dir) {
  ExperimentConfig c = load_config(config);
  if (!out_dir.empty()) c.output = out_dir;
  const MseReport rep = cmd_run(c);
  if (rep.runs_failed > 0) {
    std::cerr << "warning: " << rep.runs_failed << " of " << c.runs << " runs diverged and were excluded\n";
  }
  if (c.output.empty()) {
    write_mse_csv(rep, std::cout);
  } else {
    write_outputs(c.output, c, rep.se, &rep);
    std::cerr << "wrote " << c.output << "/mse.csv\n";
  }
  return kExitOk;
}

int do_se(const std::string& config, const std::string& out_dir) {
  ExperimentConfig c = load_config(config);
  if (!out_dir.empty()) c.output = out_dir;
  const SeTrajectory se = cmd_se(c);
  if (c.output.empty()) {
    write_se_csv(se, std::cout);
  } else {
    write_outputs(c.output, c, se, nullptr);
    std::cerr << "wrote " << c.output << "/se.csv\n";
  }
  return kExitOk;
}

int do_verify(const std::string& suite, const VerifyOptions& opts, const std::string& json_path) {
  const VerifyReport rep = cmd_verify(suite, opts);
  const auto j = rep.to_json();
  for (const auto& c : rep.checks) {
    std::cerr << (c.pass ? "PASS " : "FAIL ") << c.suite << ": " << c.name << "  observed " << c.observed
              << "  expected " << c.expected << "  tolerance " << c.tolerance << '\n';
  }
  if (json_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream f(json_path);
    if (!f) throw ValidationError("cannot write " + json_path);
    f << j.dump(2) << '\n';
  }
  return rep.pass() ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"amp-lab: approximate message passing experiments for rotationally invariant matrices"};
  app.require_subcommand(1);

  CumulantsRequest creq;
  std::string cum_out;
  auto* cum = app.add_subcommand("cumulants", "Moments and free cumulants of a spectral law");
  cum->add_option("--law", creq.law, "law spec: semicircle[:v], goe, mp:alpha, point:c, grid:..., file:path");
  cum->add_option("--matrix", creq.matrix_path, "binary matrix file instead of a law");
  cum->add_option("--order", creq.order, "number of cumulants")->required();
  cum->add_flag("--mc", creq.mc, "add Monte Carlo estimates");
  cum->add_option("--dim", creq.dim, "dimension of the Monte Carlo matrix");
  cum->add_option("--seed", creq.seed, "Monte Carlo seed");
  cum->add_option("--replicas", creq.replicas, "number of Monte Carlo replicas");
  cum->add_option("--out", cum_out, "CSV path (default: stdout)");

  std::string run_cfg, run_out;
  auto* run = app.add_subcommand("run", "Simulate the configured experiment and compare with state evolution");
  run->add_option("--config", run_cfg, "JSON configuration")->required();
  run->add_option("--out", run_out, "output directory (overrides the configuration)");

  std::string se_cfg, se_out;
  auto* se = app.add_subcommand("se", "State-evolution prediction only");
  se->add_option("--config", se_cfg, "JSON configuration")->required();
  se->add_option("--out", se_out, "output directory (overrides the configuration)");

  std::string suite = "all", json_path;
  VerifyOptions vopts;
  auto* ver = app.add_subcommand("verify", "Run the built-in property suites");
  ver->add_option("--suite", suite, "cumulants | unfolding | se-equivalence | orthogonality | all");
  ver->add_flag("--tamper", vopts.tamper, "perturb the second centering constant of the unfolding runs");
  ver->add_option("--tamper-delta", vopts.tamper_delta, "size of the perturbation");
  ver->add_option("--json", json_path, "write the JSON summary here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*cum) {
      if (creq.law.empty() == creq.matrix_path.empty()) throw ValidationError("give exactly one of --law or --matrix");
      if (cum_out.empty()) {
        cmd_cumulants(creq, std::cout);
      } else {
        std::ofstream f(cum_out);
        if (!f) throw ValidationError("cannot write " + cum_out);
        cmd_cumulants(creq, f);
      }
      return kExitOk;
    }
    if (*run) return do_run(run_cfg, run_out);
    if (*se) return do_se(se_cfg, se_out);
    if (*ver) return do_verify(suite, vopts, json_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
