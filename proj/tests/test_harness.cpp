#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "amp_lab/errors.hpp"
#include "amp_lab/harness.hpp"

using namespace amp_lab;
using nlohmann::json;

namespace {

ExperimentConfig small_spiked() {
  ExperimentConfig c;
  c.N = 200;
  c.T = 3;
  c.runs = 3;
  c.expectation.method = ExpectationMethod::GaussHermite;
  c.expectation.points = 30;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("strict configuration parsing") {
  const ExperimentConfig d = parse_config(json::object());
  CHECK(d.law == "mp:0.2");
  CHECK(d.N == 2000);
  CHECK(d.runs == 20);
  CHECK(d.T == 6);

  CHECK_THROWS_AS(parse_config(json{{"lawz", "goe"}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"expectation", {{"sample", 10}}}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"N", "2000"}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"N", 200.5}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"seed_base", -3}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"N", 8}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"omega", 1.5}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"runs", 0}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"algo", "fast-amp"}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"mode", "null"}, {"denoiser", "mmse"}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"denoiser", "mmse-rademacher"}, {"prior", "gaussian"}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"law", "semicircle"}, {"matrix_fn", "mp-denoise"}}), ValidationError);
  CHECK_THROWS_AS(parse_config(json{{"algo", "ri-amp-df"}}), UnsupportedVariant);

  const json round = config_to_json(small_spiked());
  const ExperimentConfig back = parse_config(round);
  CHECK(config_to_json(back) == round);
}

TEST_CASE("configuration files") {
  const std::string path = "test_harness_config.json";
  {
    std::ofstream f(path);
    f << "{ \"N\": 300, \"law\": \"mp:0.3\" ";
  }
  CHECK_THROWS_AS(load_config(path), ValidationError);
  {
    std::ofstream f(path);
    f << R"({"N": 300, "law": "mp:0.3"})";
  }
  CHECK(load_config(path).N == 300);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config("does-not-exist.json"), ValidationError);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ValidationError("x")) == kExitValidation);
  CHECK(exit_code_for(DomainError("x")) == kExitValidation);
  CHECK(exit_code_for(NumericalFailure("x")) == kExitNumerical);
  CHECK(exit_code_for(DivergenceError("x", 2)) == kExitNumerical);
  CHECK(kExitVerification == 3);
}

TEST_CASE("law, matrix function and prior strings") {
  CHECK(std::holds_alternative<Semicircle>(parse_law("goe").kind()));
  CHECK(std::get<Semicircle>(parse_law("semicircle:2").kind()).variance == 2.0);
  CHECK(std::get<MarchenkoPastur>(parse_law("mp:0.25").kind()).alpha == 0.25);
  CHECK(parse_law("point:1.5").atoms() == std::vector<double>{1.5});
  CHECK(parse_law("grid:3,1,2").atoms() == std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(parse_law("mp:abc"), ValidationError);
  CHECK_THROWS_AS(parse_law("cauchy"), ValidationError);

  const SpectralLaw mp = parse_law("mp:0.2");
  const ScalarFn f = parse_matrix_fn("mp-denoise", mp, 1.5);
  const double x = 1.3;
  CHECK(std::abs(f(x) - (1.5 / 0.2 * (1 + (0.2 - 1) / x) - 2.25 / (0.2 * x))) <= 1e-14);
  CHECK(parse_matrix_fn("poly:1,2,3", mp, 1.0)(2.0) == 17.0);
  CHECK(parse_matrix_fn("identity", mp, 1.0)(0.4) == 0.4);
  CHECK_THROWS_AS(parse_matrix_fn("mp-denoise:0.2", parse_law("semicircle"), 1.5), ValidationError);
  CHECK(parse_prior("sparse:0.1").kind() == PriorKind::SparseThreePoint);
  CHECK(parse_algo("ri-amp-mp") == Variant::RIAMPMP);
}

TEST_CASE("content hashes") {
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("cumulant tables") {
  std::ostringstream os;
  CumulantsRequest r;
  r.law = "mp:0.2";
  r.order = 4;
  cmd_cumulants(r, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "n,m_n,kappa_n");
  const double expected[] = {1.0, 0.2, 0.04, 0.008};
  for (double e : expected) {
    std::getline(is, line);
    const double kappa = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(std::abs(kappa - e) <= 1e-12);
  }

  std::ostringstream pm;
  r.law = "point:2.5";
  cmd_cumulants(r, pm);
  CHECK(pm.str() == "n,m_n,kappa_n\n1,2.5,2.5\n2,6.25,0\n3,15.625,0\n4,39.0625,0\n");

  std::ostringstream mc;
  r.law = "semicircle";
  r.mc = true;
  r.dim = 500;
  r.replicas = 2;
  cmd_cumulants(r, mc);
  CHECK(mc.str().rfind("n,m_n,kappa_n,kappa_hat_n,kappa_spread_n\n", 0) == 0);

  r.order = 0;
  CHECK_THROWS_AS(cmd_cumulants(r, mc), ValidationError);
}

TEST_CASE("state evolution without a spike stays at the prior variance") {
  ExperimentConfig c = small_spiked();
  c.theta = 0.0;
  c.law = "semicircle";
  c.algo = "ri-amp";
  const SeTrajectory se = cmd_se(c);
  for (const auto& st : se.states) CHECK(std::abs(st.mse - 1.0) <= 1e-9);
}

TEST_CASE("runs are deterministic and write schema-stable outputs") {
  ExperimentConfig c = small_spiked();
  namespace fs = std::filesystem;
  const fs::path a = "test_harness_out_a", b = "test_harness_out_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const MseReport r1 = cmd_run(c, 1);
  const MseReport r2 = cmd_run(c, 3);
  write_outputs(a.string(), c, r1.se, &r1);
  write_outputs(b.string(), c, r2.se, &r2);
  for (const char* name : {"mse.csv", "se.csv", "mse.svg"}) {
    REQUIRE(fs::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));
  }
  const std::string csv = slurp(a / "mse.csv");
  CHECK(csv.rfind("t,mse_emp_mean,mse_emp_stderr,mse_se_pred,overlap_emp_mean,overlap_emp_stderr,overlap_se_pred\n", 0) ==
        0);
  const json meta = json::parse(slurp(a / "meta.json"));
  CHECK(meta["files"]["mse.csv"] == git_blob_hash(csv));
  CHECK(meta["config"] == config_to_json(c));
  CHECK(meta["runs_ok"] == 3);
  CHECK(meta.contains("created_utc"));
  for (const auto& row : r1.rows) {
    CHECK(row.mse_emp_mean >= 0.0);
    CHECK(row.mse_emp_stderr >= 0.0);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("perfect initialization lowers the first error on the same seeds") {
  ExperimentConfig c = small_spiked();
  const MseReport weak = cmd_run(c, 1);
  c.omega = 1.0;
  const MseReport good = cmd_run(c, 1);
  CHECK(good.rows[0].mse_emp_mean <= weak.rows[0].mse_emp_mean);
  for (std::size_t k = 0; k < good.seeds.size(); ++k) CHECK(good.seeds[k].mse[0] <= weak.seeds[k].mse[0]);
}

TEST_CASE("identity processing reproduces RI-AMP on the spiked model") {
  ExperimentConfig c = small_spiked();
  c.law = "semicircle";
  c.theta = 3.0;
  c.algo = "ri-amp";
  const MseReport a = cmd_run(c, 1);
  c.algo = "ri-amp-mp";
  c.matrix_fn = "identity";
  const MseReport b = cmd_run(c, 1);
  for (std::size_t k = 0; k < a.seeds.size(); ++k)
    for (int t = 0; t < c.T; ++t) CHECK(std::abs(a.seeds[k].mse[t] - b.seeds[k].mse[t]) <= 1e-12);
  for (int t = 0; t < c.T; ++t) CHECK(std::abs(a.rows[t].mse_se_pred - b.rows[t].mse_se_pred) <= 1e-12);
}

TEST_CASE("null-model runs with Gaussian AMP") {
  ExperimentConfig c;
  c.mode = "null";
  c.law = "semicircle";
  c.algo = "gaussian-amp";
  c.denoiser = "tanh";
  c.N = 300;
  c.T = 3;
  c.runs = 2;
  c.expectation.method = ExpectationMethod::GaussHermite;
  const MseReport r = cmd_run(c, 1);
  CHECK(r.runs_ok == 2);
  CHECK(r.rows.size() == 3);
}

TEST_CASE("verification entry point") {
  CHECK_THROWS_AS(cmd_verify("everything"), ValidationError);
  const VerifyReport rep = cmd_verify("cumulants");
  CHECK(rep.pass());
  CHECK(rep.to_json()["checks"].size() == rep.checks.size());
}
