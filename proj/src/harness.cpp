#include "amp_lab/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "amp_lab/errors.hpp"
#include "amp_lab/parallel.hpp"

namespace amp_lab {

using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return kExitValidation;
  if (dynamic_cast<const NumericalFailure*>(&e)) return kExitNumerical;
  if (dynamic_cast<const json::exception*>(&e)) return kExitValidation;
  return kExitNumerical;
}

namespace {

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || *end != '\0' || !std::isfinite(v)) {
      throw ValidationError("cannot parse '" + tok + "' in " + what);
    }
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty list in " + what);
  return out;
}

double parse_scalar(const std::string& s, const std::string& what) {
  const auto v = parse_list(s, what);
  if (v.size() != 1) throw ValidationError(what + " expects a single number");
  return v[0];
}

std::pair<std::string, std::string> split_spec(const std::string& spec) {
  const auto c = spec.find(':');
  if (c == std::string::npos) return {spec, ""};
  return {spec.substr(0, c), spec.substr(c + 1)};
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

SpectralLaw parse_law(const std::string& spec) {
  const auto [head, arg] = split_spec(spec);
  if (head == "semicircle" || head == "goe") {
    return SpectralLaw::semicircle(arg.empty() ? 1.0 : parse_scalar(arg, "semicircle variance"));
  }
  if (head == "mp") return SpectralLaw::marchenko_pastur(parse_scalar(arg, "Marchenko-Pastur ratio"));
  if (head == "point") return SpectralLaw::point_mass(parse_scalar(arg, "point mass"));
  if (head == "grid") return SpectralLaw::discrete(parse_list(arg, "grid atoms"));
  if (head == "file") return load_law_file(arg);
  throw ValidationError("unknown law '" + spec +
                        "' (expected semicircle[:v], goe, mp:alpha, point:c, grid:a,b,..., file:path)");
}

ScalarFn parse_matrix_fn(const std::string& spec, const SpectralLaw& law, double theta) {
  const auto [head, arg] = split_spec(spec);
  if (head == "identity") return [](double x) { return x; };
  if (head == "mp-denoise") {
    double alpha;
    if (!arg.empty()) {
      alpha = parse_scalar(arg, "mp-denoise ratio");
    } else if (const auto* mp = std::get_if<MarchenkoPastur>(&law.kind())) {
      alpha = mp->alpha;
    } else {
      throw ValidationError("mp-denoise needs a Marchenko-Pastur law or an explicit ratio 'mp-denoise:alpha'");
    }
    if (!(alpha > 0.0)) throw ValidationError("mp-denoise ratio must be positive");
    constexpr double kPoleGuard = 1e-6;
    if (law.support_lo() < kPoleGuard && law.support_hi() > -kPoleGuard) {
      throw ValidationError("mp-denoise has a pole at 0, which the support of " + law.describe() + " reaches");
    }
    return [alpha, theta](double x) {
      return theta / alpha * (1.0 + (alpha - 1.0) / x) - theta * theta / (alpha * x);
    };
  }
  if (head == "poly") {
    const auto c = parse_list(arg, "polynomial coefficients");
    return [c](double x) {
      double v = 0.0;
      for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
      return v;
    };
  }
  if (head == "file") {
    std::ifstream in(arg);
    if (!in) throw ValidationError("cannot open matrix function table '" + arg + "'");
    std::vector<std::pair<double, double>> tab;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
      std::istringstream is(line);
      double a, b;
      if (!(is >> a)) continue;
      std::string rest;
      if (!(is >> b) || (is >> rest)) {
        throw ValidationError(arg + ":" + std::to_string(lineno) + ": expected two columns");
      }
      tab.emplace_back(a, b);
    }
    if (tab.size() < 2) throw ValidationError(arg + ": matrix function table needs at least two rows");
    std::sort(tab.begin(), tab.end());
    return [tab](double x) {
      if (x < tab.front().first || x > tab.back().first) return std::numeric_limits<double>::quiet_NaN();
      auto it = std::lower_bound(tab.begin(), tab.end(), std::make_pair(x, -std::numeric_limits<double>::infinity()));
      if (it == tab.begin()) return it->second;
      const auto& [x1, y1] = *it;
      const auto& [x0, y0] = *(it - 1);
      return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    };
  }
  throw ValidationError("unknown matrix function '" + spec + "' (expected identity, mp-denoise, poly:..., file:path)");
}

Prior parse_prior(const std::string& spec) {
  const auto [head, arg] = split_spec(spec);
  if (head == "rademacher") return Prior::rademacher();
  if (head == "gaussian") return Prior::gaussian();
  if (head == "sparse") return Prior::sparse_three_point(parse_scalar(arg, "sparsity"));
  throw ValidationError("unknown prior '" + spec + "' (expected rademacher, gaussian, sparse:p)");
}

Variant parse_algo(const std::string& name) {
  for (Variant v : {Variant::GaussianAMP, Variant::RIAMP, Variant::RIAMPDF, Variant::RIAMPMP, Variant::OAMP}) {
    if (variant_name(v) == name) return v;
  }
  throw ValidationError("unknown algorithm '" + name +
                        "' (expected gaussian-amp, ri-amp, ri-amp-df, ri-amp-mp, oamp)");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class T>
T typed(const json& v, const std::string& key) {
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    if (!v.is_number_integer()) throw ValidationError("configuration key '" + key + "' must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ValidationError("configuration key '" + key + "' must be nonnegative");
    }
  }
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ValidationError("configuration key '" + key + "' has the wrong type");
  }
}

const std::set<std::string> kMmseDenoisers{"mmse-combining", "linear-mmse-combining", "mmse", "mmse-rademacher"};

ExpectationConfig parse_expectation(const json& j) {
  if (!j.is_object()) throw ValidationError("configuration key 'expectation' must be an object");
  ExpectationConfig e;
  for (const auto& [k, v] : j.items()) {
    if (k == "method") {
      const auto m = typed<std::string>(v, "expectation.method");
      if (m == "mc") {
        e.method = ExpectationMethod::MonteCarlo;
      } else if (m == "gh") {
        e.method = ExpectationMethod::GaussHermite;
      } else if (m == "trapezoid") {
        e.method = ExpectationMethod::Trapezoid;
      } else if (m == "auto") {
        e.method = ExpectationMethod::Auto;
      } else {
        throw ValidationError("expectation.method must be mc, gh, trapezoid or auto");
      }
    } else if (k == "samples") {
      const auto s = typed<long long>(v, "expectation.samples");
      if (s < 2) throw ValidationError("expectation.samples must be at least 2");
      e.samples = static_cast<std::size_t>(s);
    } else if (k == "seed") {
      e.seed = typed<std::uint64_t>(v, "expectation.seed");
    } else if (k == "shards") {
      e.shards = typed<int>(v, "expectation.shards");
      if (e.shards < 1) throw ValidationError("expectation.shards must be positive");
    } else if (k == "points") {
      e.points = typed<int>(v, "expectation.points");
      if (e.points < 2 || e.points > 400) throw ValidationError("expectation.points must lie in [2, 400]");
    } else {
      throw ValidationError("unknown configuration key 'expectation." + k + "'");
    }
  }
  return e;
}

const char* method_name(ExpectationMethod m) {
  switch (m) {
    case ExpectationMethod::MonteCarlo:
      return "mc";
    case ExpectationMethod::GaussHermite:
      return "gh";
    case ExpectationMethod::Trapezoid:
      return "trapezoid";
    case ExpectationMethod::Auto:
      return "auto";
  }
  return "mc";
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ValidationError("configuration must be a JSON object");
  ExperimentConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "mode") {
      c.mode = typed<std::string>(v, k);
    } else if (k == "law") {
      c.law = typed<std::string>(v, k);
    } else if (k == "N") {
      c.N = typed<int>(v, k);
    } else if (k == "T") {
      c.T = typed<int>(v, k);
    } else if (k == "theta") {
      c.theta = typed<double>(v, k);
    } else if (k == "omega") {
      c.omega = typed<double>(v, k);
    } else if (k == "runs") {
      c.runs = typed<int>(v, k);
    } else if (k == "seed_base") {
      c.seed_base = typed<std::uint64_t>(v, k);
    } else if (k == "algo") {
      c.algo = typed<std::string>(v, k);
    } else if (k == "denoiser") {
      c.denoiser = typed<std::string>(v, k);
    } else if (k == "prior") {
      c.prior = typed<std::string>(v, k);
    } else if (k == "matrix_fn") {
      c.matrix_fn = typed<std::string>(v, k);
    } else if (k == "cumulant_source") {
      c.cumulant_source = typed<std::string>(v, k);
    } else if (k == "spectrum") {
      c.spectrum = typed<std::string>(v, k);
    } else if (k == "expectation") {
      c.expectation = parse_expectation(v);
    } else if (k == "nu") {
      c.nu = typed<std::string>(v, k);
    } else if (k == "output") {
      c.output = typed<std::string>(v, k);
    } else if (k == "svg") {
      c.svg = typed<bool>(v, k);
    } else {
      throw ValidationError("unknown configuration key '" + k + "'");
    }
  }
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open configuration '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json e = {{"method", method_name(c.expectation.method)},
            {"samples", c.expectation.samples},
            {"seed", c.expectation.seed},
            {"shards", c.expectation.shards},
            {"points", c.expectation.points}};
  return json{{"mode", c.mode},
              {"law", c.law},
              {"N", c.N},
              {"T", c.T},
              {"theta", c.theta},
              {"omega", c.omega},
              {"runs", c.runs},
              {"seed_base", c.seed_base},
              {"algo", c.algo},
              {"denoiser", c.denoiser},
              {"prior", c.prior},
              {"matrix_fn", c.matrix_fn},
              {"cumulant_source", c.cumulant_source},
              {"spectrum", c.spectrum},
              {"expectation", e},
              {"nu", c.nu},
              {"output", c.output},
              {"svg", c.svg}};
}

void validate_config(const ExperimentConfig& c) {
  if (c.mode != "spiked" && c.mode != "null") throw ValidationError("mode must be 'spiked' or 'null'");
  if (!(c.omega >= 0.0 && c.omega <= 1.0)) throw ValidationError("omega must lie in [0, 1]");
  if (c.N < 16) throw ValidationError("N must be at least 16");
  if (c.N > kDenseEigenCap) throw SizeLimitError("N exceeds the dense eigendecomposition cap");
  if (c.runs < 1) throw ValidationError("runs must be at least 1");
  if (c.T < 1 || c.T > kDefaultHorizonCap) {
    throw ValidationError("T must lie in [1, " + std::to_string(kDefaultHorizonCap) + "]");
  }
  if (!(c.theta >= 0.0) || !std::isfinite(c.theta)) throw ValidationError("theta must be nonnegative");
  if (c.spectrum != "quantile") throw ValidationError("spectrum must be 'quantile'");
  if (c.cumulant_source != "grid" && c.cumulant_source != "population") {
    throw ValidationError("cumulant_source must be 'grid' or 'population'");
  }
  if (c.nu != "auto" && c.nu != "analytic" && c.nu != "empirical") {
    throw ValidationError("nu must be 'auto', 'analytic' or 'empirical'");
  }
  static const std::set<std::string> known{"mmse-combining", "linear-mmse-combining", "mmse", "mmse-rademacher",
                                           "tanh", "random-lipschitz", "identity"};
  if (!known.count(c.denoiser)) throw ValidationError("unknown denoiser '" + c.denoiser + "'");
  const SpectralLaw law = parse_law(c.law);
  const Prior prior = parse_prior(c.prior);
  const Variant v = parse_algo(c.algo);
  if (kMmseDenoisers.count(c.denoiser)) {
    if (!c.spiked()) throw ValidationError("MMSE denoisers need the spiked model and its declared prior");
    if (std::abs(prior.second_moment() - 1.0) > 1e-12) throw ValidationError("prior must have unit second moment");
    if (c.denoiser == "mmse-rademacher" && prior.kind() != PriorKind::Rademacher) {
      throw ValidationError("mmse-rademacher needs the Rademacher prior");
    }
  }
  if (c.spiked() && (v == Variant::GaussianAMP || v == Variant::RIAMPDF)) {
    throw UnsupportedVariant(c.algo + " has no spiked-model recursion; use ri-amp, ri-amp-mp or oamp");
  }
  if (v == Variant::GaussianAMP) {
    if (!std::holds_alternative<Semicircle>(law.kind())) throw ValidationError("gaussian-amp needs a semicircle law");
    if (c.denoiser != "tanh" && c.denoiser != "identity") {
      throw ValidationError("gaussian-amp supports the tanh and identity denoisers");
    }
  }
  if (v == Variant::RIAMPMP || v == Variant::OAMP) parse_matrix_fn(c.matrix_fn, law, c.theta);
}

// ---------------------------------------------------------------------------
// State evolution for a configuration

namespace {

DenoiserPtr single_argument(const std::string& denoiser) {
  return denoiser == "tanh" ? make_last_tanh(1) : make_identity(1);
}

DenoiserFactory factory_for(const ExperimentConfig& c) {
  const Prior prior = parse_prior(c.prior);
  if (c.denoiser == "mmse-combining" || c.denoiser == "linear-mmse-combining" || c.denoiser == "mmse-rademacher") {
    return mmse_combining(prior);
  }
  if (c.denoiser == "mmse") {
    return [prior](int t, const SeState& st) -> DenoiserPtr {
      const double b = st.beta[t - 1];
      if (std::abs(b) < 1e-12) return make_constant(t, 0.0);
      std::vector<double> w(t, 0.0);
      w[t - 1] = 1.0 / b;
      return make_combined_mmse(w, st.Sigma(t - 1, t - 1) / (b * b), prior);
    };
  }
  if (c.denoiser == "tanh") return fixed_schedule(last_tanh_schedule(c.T));
  if (c.denoiser == "random-lipschitz") return fixed_schedule(random_lipschitz_schedule(c.T, c.seed_base));
  DenoiserSchedule id;
  for (int t = 1; t <= c.T; ++t) id.push_back(make_identity(t));
  return fixed_schedule(id);
}

struct Instance {
  std::shared_ptr<const SpectralOperator> M;
  Eigen::VectorXd x;
  Eigen::VectorXd u1;
  std::vector<double> grid;
  std::optional<OverlapMeasure> overlap;
};

Instance sample_instance(const ExperimentConfig& c, const SpectralLaw& law, std::uint64_t seed) {
  Instance inst;
  inst.grid = quantile_grid(law, static_cast<std::size_t>(c.N)).atoms();
  auto W = std::make_shared<const SpectralOperator>(build_rot_invariant(inst.grid, splitmix(4 * seed + 1)));
  std::mt19937_64 rng(splitmix(4 * seed + 3));
  std::normal_distribution<double> normal;
  Eigen::VectorXd n(c.N);
  for (int i = 0; i < c.N; ++i) n[i] = normal(rng);
  if (c.spiked()) {
    SpikedInstance sp = build_spiked(c.theta, parse_prior(c.prior), W, splitmix(4 * seed + 2));
    inst.overlap = overlap_measure(sp);
    inst.x = sp.x_star;
    inst.M = std::make_shared<const SpectralOperator>(std::move(sp.Y_op));
    inst.u1 = std::sqrt(c.omega) * inst.x + std::sqrt(1.0 - c.omega) * n;
  } else {
    inst.x = Eigen::VectorXd::Zero(c.N);
    inst.M = W;
    inst.u1 = n;
  }
  return inst;
}

bool wants_empirical_nu(const ExperimentConfig& c, const SpectralLaw& law) {
  if (c.nu == "empirical") return true;
  if (c.nu == "analytic") return false;
  return !has_closed_form_stieltjes(law);
}


SeProblem se_problem(const ExperimentConfig& c, const SpectralLaw& law, std::optional<NuMeasure> nu) {
  SeProblem p;
  p.law = law;
  p.T = c.T;
  p.expectation = c.expectation;
  p.expectation.threads = worker_count();
  p.denoisers = factory_for(c);
  if (c.spiked()) {
    p.prior = parse_prior(c.prior);
    p.nu = std::move(nu);
    p.init_signal = std::sqrt(c.omega);
    p.init_noise = std::sqrt(1.0 - c.omega);
  }
  switch (parse_algo(c.algo)) {
    case Variant::GaussianAMP: {
      // Same recursion as RI-AMP under exact semicircle centering, with the
      // scalar denoisers lifted to act on the last iterate.
      p.form = SeForm::RIAMP;
      const double var = std::get<Semicircle>(law.kind()).variance;
      p.family = poly_family_from_centering(PolyKind::Q, semicircle_cumulants(c.T, var));
      const bool tanh = c.denoiser == "tanh";
      p.denoisers = [tanh](int t, const SeState&) { return tanh ? make_last_tanh(t) : make_identity(t); };
      break;
    }
    case Variant::RIAMP:
      p.form = c.spiked() ? SeForm::RIAMPMP : SeForm::RIAMP;
      if (c.spiked()) p.f = [](double x) { return x; };
      break;
    case Variant::RIAMPDF:
      p.form = SeForm::RIAMPDF;
      break;
    case Variant::RIAMPMP:
      p.form = SeForm::RIAMPMP;
      p.f = parse_matrix_fn(c.matrix_fn, law, c.theta);
      break;
    case Variant::OAMP:
      p.form = SeForm::OAMP;
      p.f_schedule.assign(static_cast<std::size_t>(c.T), parse_matrix_fn(c.matrix_fn, law, c.theta));
      break;
    case Variant::FOM:
      throw UnsupportedVariant("fom has no configuration-driven recursion");
  }
  return p;
}

std::optional<NuMeasure> nu_for(const ExperimentConfig& c, const SpectralLaw& law, int threads) {
  if (!c.spiked()) return std::nullopt;
  if (wants_empirical_nu(c, law)) return nu_measure_empirical(sample_overlap_measures(c, threads));
  return nu_measure_analytic(law, c.theta);
}

DenoiserSchedule run_schedule(const ExperimentConfig& c, const SeTrajectory& se) {
  if (parse_algo(c.algo) != Variant::GaussianAMP) return se.denoisers;
  return DenoiserSchedule(static_cast<std::size_t>(c.T), single_argument(c.denoiser));
}

}  // namespace

std::vector<OverlapMeasure> sample_overlap_measures(const ExperimentConfig& c, int threads) {
  validate_config(c);
  if (!c.spiked()) throw ValidationError("overlap measures need the spiked model");
  const SpectralLaw law = parse_law(c.law);
  std::vector<OverlapMeasure> out(static_cast<std::size_t>(c.runs));
  parallel_for(out.size(), threads > 0 ? threads : worker_count(), [&](std::size_t k) {
    out[k] = *sample_instance(c, law, c.seed_base + k).overlap;
  });
  return out;
}

SeTrajectory cmd_se(const ExperimentConfig& c) {
  validate_config(c);
  const SpectralLaw law = parse_law(c.law);
  return run_state_evolution(se_problem(c, law, nu_for(c, law, worker_count())));
}

SeedResult run_seed(const ExperimentConfig& c, std::uint64_t seed, const DenoiserSchedule& eta) {
  SeedResult r;
  r.seed = seed;
  const SpectralLaw law = parse_law(c.law);
  const Instance inst = sample_instance(c, law, seed);
  r.top_eigenvalue = inst.M->eigenvalues().maxCoeff();
  if (inst.overlap) r.nu_first_moment = inst.overlap->moment(1);
  const SpectralLaw center = c.cumulant_source == "grid" ? SpectralLaw::discrete(inst.grid) : law;
  AmpRun run;
  try {
    switch (parse_algo(c.algo)) {
      case Variant::GaussianAMP:
        run = run_gaussian_amp(inst.M, eta, inst.u1, c.T);
        break;
      case Variant::RIAMP:
        run = run_ri_amp(inst.M, center, eta, inst.u1, c.T);
        break;
      case Variant::RIAMPDF:
        run = run_ri_amp_df(inst.M, center, eta, inst.u1, c.T);
        break;
      case Variant::RIAMPMP:
        run = run_ri_amp_mp(inst.M, center, parse_matrix_fn(c.matrix_fn, law, c.theta), eta, inst.u1, c.T);
        break;
      case Variant::OAMP:
        run = run_oamp(inst.M, std::vector<ScalarFn>(c.T, parse_matrix_fn(c.matrix_fn, law, c.theta)), eta,
                       inst.u1, c.T);
        break;
      case Variant::FOM:
        throw UnsupportedVariant("fom has no configuration-driven run");
    }
  } catch (const NumericalFailure& e) {
    r.ok = false;
    r.error = e.what();
    return r;
  }
  const double invN = 1.0 / static_cast<double>(c.N);
  for (int t = 1; t <= c.T; ++t) {
    const Eigen::VectorXd& u = run.u[static_cast<std::size_t>(t)];
    r.mse.push_back((u - inst.x).squaredNorm() * invN);
    r.overlap.push_back(u.dot(inst.x) * invN);
  }
  r.ok = true;
  return r;
}

MseReport cmd_run(const ExperimentConfig& c, int threads) {
  validate_config(c);
  if (threads <= 0) threads = worker_count();
  const SpectralLaw law = parse_law(c.law);
  MseReport rep;
  rep.se = run_state_evolution(se_problem(c, law, nu_for(c, law, threads)));
  const DenoiserSchedule eta = run_schedule(c, rep.se);
  rep.seeds.resize(static_cast<std::size_t>(c.runs));
  parallel_for(rep.seeds.size(), threads, [&](std::size_t k) { rep.seeds[k] = run_seed(c, c.seed_base + k, eta); });

  for (const auto& s : rep.seeds) (s.ok ? rep.runs_ok : rep.runs_failed)++;
  if (rep.runs_ok == 0) throw NumericalFailure("every run diverged: " + rep.seeds.front().error);
  auto stats = [](const std::vector<double>& v, double& mean, double& se) {
    const double n = static_cast<double>(v.size());
    mean = pairwise_sum(v.data(), v.size(), 0.0) / n;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
    se = v.size() > 1 ? std::sqrt(pairwise_sum(sq.data(), sq.size(), 0.0) / (n - 1.0) / n) : 0.0;
  };
  for (int t = 1; t <= c.T; ++t) {
    std::vector<double> m, o;
    for (const auto& s : rep.seeds) {
      if (!s.ok) continue;
      m.push_back(s.mse[t - 1]);
      o.push_back(s.overlap[t - 1]);
    }
    MseRow row;
    row.t = t;
    stats(m, row.mse_emp_mean, row.mse_emp_stderr);
    stats(o, row.overlap_emp_mean, row.overlap_emp_stderr);
    row.mse_se_pred = rep.se.states[t - 1].mse;
    row.overlap_se_pred = rep.se.states[t - 1].overlap;
    rep.rows.push_back(row);
  }
  return rep;
}

void write_mse_csv(const MseReport& r, std::ostream& out) {
  out << "t,mse_emp_mean,mse_emp_stderr,mse_se_pred,overlap_emp_mean,overlap_emp_stderr,overlap_se_pred\n";
  out << std::setprecision(12);
  for (const auto& row : r.rows) {
    out << row.t << ',' << row.mse_emp_mean << ',' << row.mse_emp_stderr << ',' << row.mse_se_pred << ','
        << row.overlap_emp_mean << ',' << row.overlap_emp_stderr << ',' << row.overlap_se_pred << '\n';
  }
}

void write_mse_svg(const MseReport& r, std::ostream& out) {
  const double W = 640, H = 400, ml = 70, mr = 20, mt = 30, mb = 50;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : r.rows) {
    lo = std::min({lo, row.mse_emp_mean - row.mse_emp_stderr, row.mse_se_pred});
    hi = std::max({hi, row.mse_emp_mean + row.mse_emp_stderr, row.mse_se_pred});
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const int T = static_cast<int>(r.rows.size());
  auto X = [&](int t) { return ml + (T > 1 ? (t - 1) * (W - ml - mr) / (T - 1) : 0.5 * (W - ml - mr)); };
  auto Y = [&](double v) { return mt + (hi - v) * (H - mt - mb) / (hi - lo); };
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  for (const auto& row : r.rows) {
    out << "<text x=\"" << X(row.t) << "\" y=\"" << H - mb + 18 << "\" font-size=\"12\" text-anchor=\"middle\">"
        << row.t << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + k * (hi - lo) / 4;
    out << "<text x=\"" << ml - 6 << "\" y=\"" << Y(v) + 4 << "\" font-size=\"12\" text-anchor=\"end\">"
        << std::setprecision(3) << v << std::setprecision(2) << "</text>\n";
  }
  out << "<text x=\"" << (W + ml) / 2 << "\" y=\"" << H - 10 << "\" font-size=\"13\" text-anchor=\"middle\">iteration t</text>\n";
  out << "<text x=\"16\" y=\"" << (H - mb + mt) / 2 << "\" font-size=\"13\" transform=\"rotate(-90 16 "
      << (H - mb + mt) / 2 << ")\" text-anchor=\"middle\">MSE</text>\n";
  out << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" points=\"";
  for (const auto& row : r.rows) out << X(row.t) << ',' << Y(row.mse_emp_mean + row.mse_emp_stderr) << ' ';
  for (auto it = r.rows.rbegin(); it != r.rows.rend(); ++it) {
    out << X(it->t) << ',' << Y(it->mse_emp_mean - it->mse_emp_stderr) << ' ';
  }
  out << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (const auto& row : r.rows) out << X(row.t) << ',' << Y(row.mse_emp_mean) << ' ';
  out << "\"/>\n<polyline fill=\"none\" stroke=\"#cb181d\" stroke-width=\"2\" stroke-dasharray=\"6,4\" points=\"";
  for (const auto& row : r.rows) out << X(row.t) << ',' << Y(row.mse_se_pred) << ' ';
  out << "\"/>\n";
  out << "<text x=\"" << W - mr - 150 << "\" y=\"" << mt + 4 << "\" font-size=\"12\" fill=\"#08519c\">empirical mean</text>\n";
  out << "<text x=\"" << W - mr - 150 << "\" y=\"" << mt + 20 << "\" font-size=\"12\" fill=\"#cb181d\">state evolution</text>\n";
  out << "</svg>\n";
}

std::string sha1_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw NumericalFailure("SHA-1 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string git_blob_hash(const std::string& content) {
  std::string obj = "blob " + std::to_string(content.size());
  obj.push_back('\0');
  obj += content;
  return sha1_hex(obj);
}

void write_outputs(const std::string& dir, const ExperimentConfig& c, const SeTrajectory& se,
                   const MseReport* report) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
  json files = json::object();
  auto emit = [&](const std::string& name, const std::string& content) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + (fs::path(dir) / name).string());
    f << content;
    files[name] = git_blob_hash(content);
  };
  std::ostringstream se_csv;
  write_se_csv(se, se_csv);
  emit("se.csv", se_csv.str());
  if (report) {
    std::ostringstream mse;
    write_mse_csv(*report, mse);
    emit("mse.csv", mse.str());
    if (c.svg) {
      std::ostringstream svg;
      write_mse_svg(*report, svg);
      emit("mse.svg", svg.str());
    }
  }
  const json cfg = config_to_json(c);
  json meta{{"generator", "amp-lab 1.0.0"},
            {"config", cfg},
            {"config_hash", git_blob_hash(cfg.dump(2))},
            {"files", files},
            {"scale_note", "desk-scale defaults are N = 2000 and 20 runs per configuration"}};
  if (report) {
    meta["runs_ok"] = report->runs_ok;
    meta["runs_failed"] = report->runs_failed;
    json failures = json::array();
    for (const auto& s : report->seeds)
      if (!s.ok) failures.push_back({{"seed", s.seed}, {"error", s.error}});
    meta["failures"] = failures;
  }
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  meta["created_utc"] = ts.str();
  std::ofstream f(fs::path(dir) / "meta.json");
  if (!f) throw ValidationError("cannot write meta.json");
  f << meta.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Cumulant tables

void cmd_cumulants(const CumulantsRequest& req, std::ostream& out) {
  if (req.order < 1 || req.order > kRecursionCap) {
    throw ValidationError("order must lie in [1, " + std::to_string(kRecursionCap) + "]");
  }
  std::optional<SpectralOperator> op;
  SpectralLaw law = SpectralLaw::point_mass(0.0);
  if (!req.matrix_path.empty()) {
    const Eigen::MatrixXd A = load_matrix(req.matrix_path);
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, A.cwiseAbs().maxCoeff())) {
      throw ValidationError(req.matrix_path + ": matrix is not symmetric");
    }
    op = eigendecompose(A);
    law = op->empirical_law();
  } else {
    law = parse_law(req.law);
  }
  std::vector<double> m;
  for (int n = 1; n <= req.order; ++n) m.push_back(moment(law, n));
  const CumulantTable tab = moments_to_cumulants(m);

  std::vector<double> mean, spread;
  if (req.mc) {
    if (req.replicas < 1) throw ValidationError("at least one Monte Carlo replica is needed");
    Eigen::VectorXd diag;
    if (op) {
      diag = op->eigenvalues();
    } else {
      if (req.dim < 16) throw ValidationError("Monte Carlo dimension must be at least 16");
      const auto g = quantile_grid(law, static_cast<std::size_t>(req.dim)).atoms();
      diag = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
    }
    // The trace estimator sees only the spectrum, so the rotation is skipped.
    const MatVec mv = [&diag](const Eigen::VectorXd& v) { return Eigen::VectorXd(diag.cwiseProduct(v)); };
    std::vector<std::vector<double>> reps;
    for (int r = 0; r < req.replicas; ++r) {
      reps.push_back(mc_cumulants(mv, diag.size(), req.order, req.seed + static_cast<std::uint64_t>(r)));
    }
    for (int n = 0; n < req.order; ++n) {
      double s = 0.0, s2 = 0.0;
      for (const auto& v : reps) s += v[n];
      const double mu = s / req.replicas;
      for (const auto& v : reps) s2 += (v[n] - mu) * (v[n] - mu);
      mean.push_back(mu);
      spread.push_back(req.replicas > 1 ? std::sqrt(s2 / (req.replicas - 1)) : 0.0);
    }
  }
  out << "n,m_n,kappa_n" << (req.mc ? ",kappa_hat_n,kappa_spread_n" : "") << '\n';
  out << std::setprecision(15);
  for (int n = 0; n < req.order; ++n) {
    out << n + 1 << ',' << tab.moments[n] << ',' << tab.cumulants[n];
    if (req.mc) out << ',' << mean[n] << ',' << spread[n];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Verification suites

bool VerifyReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.pass; });
}

json VerifyReport::to_json() const {
  json arr = json::array();
  for (const auto& c : checks) {
    arr.push_back({{"suite", c.suite},
                   {"name", c.name},
                   {"observed", c.observed},
                   {"expected", c.expected},
                   {"tolerance", c.tolerance},
                   {"pass", c.pass}});
  }
  return json{{"pass", pass()}, {"checks", arr}};
}

namespace {

void check(VerifyReport& rep, const std::string& suite, const std::string& name, double observed, double expected,
           double tol) {
  const bool ok = std::isfinite(observed) && std::abs(observed - expected) <= tol;
  rep.checks.push_back({suite, name, observed, expected, tol, ok});
}

void suite_cumulants(VerifyReport& rep) {
  std::mt19937_64 rng(20240501);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_int_distribution<int> ord(1, 8);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> kappa(static_cast<std::size_t>(ord(rng)));
    for (double& v : kappa) v = unif(rng);
    const auto back = moments_to_cumulants(cumulants_to_moments_nc(kappa)).cumulants;
    for (std::size_t i = 0; i < kappa.size(); ++i) worst = std::max(worst, std::abs(back[i] - kappa[i]));
  }
  check(rep, "cumulants", "moment-cumulant round trip, 100 sequences", worst, 0.0, 1e-10);

  const SpectralLaw sc = SpectralLaw::semicircle();
  std::vector<double> m;
  for (int n = 1; n <= 6; ++n) m.push_back(moment(sc, n));
  const auto ksc = moments_to_cumulants(m).cumulants;
  double err = 0.0;
  for (int n = 0; n < 6; ++n) err = std::max(err, std::abs(ksc[n] - (n == 1 ? 1.0 : 0.0)));
  check(rep, "cumulants", "semicircle cumulants", err, 0.0, 1e-12);

  const double alpha = 0.3;
  const SpectralLaw mp = SpectralLaw::marchenko_pastur(alpha);
  m.clear();
  for (int n = 1; n <= 6; ++n) m.push_back(moment(mp, n));
  const auto kmp = moments_to_cumulants(m).cumulants;
  err = 0.0;
  for (int n = 0; n < 6; ++n) err = std::max(err, std::abs(kmp[n] - std::pow(alpha, n)));
  check(rep, "cumulants", "Marchenko-Pastur cumulants", err, 0.0, 1e-9);

  for (const auto& [name, law] : {std::pair{"semicircle", sc}, std::pair{"mp:0.3", mp}}) {
    const auto pm = partial_moments(law, 6);
    const PolyFamily q = build_poly_family(law, PolyKind::Q, 6);
    double e = 0.0;
    for (int k = 0; k <= 6; ++k)
      for (int j = 0; j <= 6; ++j) {
        const double v = expect(law, [&](double x) { return std::pow(x, k) * q.evaluate(j, x); });
        e = std::max(e, std::abs(v - pm.c(k, j)));
      }
    check(rep, "cumulants", std::string("partial moments, ") + name, e, 0.0, 1e-9);
  }
}

void suite_unfolding(VerifyReport& rep, const VerifyOptions& opts) {
  constexpr int N = 300;
  constexpr int T = 4;
  const ScalarFn f = [](double x) { return std::tanh(x) + 0.25 * x * x; };
  for (const std::string spec : {"semicircle", "mp:0.5"}) {
    const SpectralLaw law = parse_law(spec);
    const auto grid = quantile_grid(law, N).atoms();
    const SpectralLaw center = SpectralLaw::discrete(grid);
    double rec = 0.0, rec_df = 0.0, rec_mp = 0.0, tr = 0.0, tr_df = 0.0, tr_mp = 0.0, div = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto W = std::make_shared<const SpectralOperator>(build_rot_invariant(grid, 1000 + seed));
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> normal;
      Eigen::VectorXd u1(N);
      for (int i = 0; i < N; ++i) u1[i] = normal(rng);
      const DenoiserSchedule eta = random_lipschitz_schedule(T, seed);
      EngineOptions eo;
      if (opts.tamper) {
        auto c = build_poly_family(center, PolyKind::Q, T).centering;
        c[1] += opts.tamper_delta;
        eo.centering = c;
      }
      const AmpRun a = run_ri_amp(W, center, eta, u1, T, eo);
      const AmpRun b = run_ri_amp_df(W, center, eta, u1, T);
      const AmpRun m = run_ri_amp_mp(W, center, f, eta, u1, T);
      const auto ra = verify_unfolding(a), rb = verify_unfolding(b), rm = verify_unfolding(m);
      rec = std::max(rec, ra.max_reconstruction_error);
      rec_df = std::max(rec_df, rb.max_reconstruction_error);
      rec_mp = std::max(rec_mp, rm.max_reconstruction_error);
      tr = std::max(tr, ra.max_trace_residual);
      tr_df = std::max(tr_df, rb.max_trace_residual);
      tr_mp = std::max(tr_mp, rm.max_trace_residual);
      div = std::max({div, ubar_divergence_residual(a, eta), ubar_divergence_residual(b, eta),
                      ubar_divergence_residual(m, eta)});
    }
    check(rep, "unfolding", spec + " ri-amp reconstruction", rec, 0.0, 1e-8);
    check(rep, "unfolding", spec + " ri-amp-df reconstruction", rec_df, 0.0, 1e-8);
    check(rep, "unfolding", spec + " ri-amp-mp reconstruction", rec_mp, 0.0, 1e-8);
    check(rep, "unfolding", spec + " ri-amp trace residual", tr, 0.0, 1e-9);
    check(rep, "unfolding", spec + " ri-amp-df trace residual", tr_df, 0.0, 1e-9);
    check(rep, "unfolding", spec + " ri-amp-mp trace residual", tr_mp, 0.0, 1e-9);
    check(rep, "unfolding", spec + " divergence-free residual", div, 0.0, 1e-10);
  }
}

void suite_se_equivalence(VerifyReport& rep) {
  const double alpha = 0.3;
  const SpectralLaw law = SpectralLaw::marchenko_pastur(alpha);
  const PolyFamily q = build_poly_family(law, PolyKind::Q, 5);
  const WeightedAtoms rule = quadrature_rule(law);
  const auto kappa = marchenko_pastur_cumulants(10, alpha);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> dim(1, 5);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const int t = dim(rng);
    Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(t, t);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < i; ++j) Phi(i, j) = 0.5 * normal(rng);
    Eigen::MatrixXd A(t, t);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < t; ++j) A(i, j) = normal(rng);
    const Eigen::MatrixXd Db = A * A.transpose() / t + 0.1 * Eigen::MatrixXd::Identity(t, t);
    const Eigen::MatrixXd S = theorem_se_form(q, rule, Phi, Db);
    const Eigen::MatrixXd F = fan_se_form(kappa, Phi, delta_from_relation(Db, Phi, S));
    worst = std::max(worst, (S - F).cwiseAbs().maxCoeff() / std::max(1.0, S.cwiseAbs().maxCoeff()));
  }
  check(rep, "se-equivalence", "covariance forms over 50 random draws", worst, 0.0, 1e-8);

  ExpectationConfig gh;
  gh.method = ExpectationMethod::Trapezoid;
  constexpr int T = 3;
  SeProblem p;
  p.law = SpectralLaw::semicircle();
  p.family = poly_family_from_centering(PolyKind::Q, semicircle_cumulants(T));
  p.denoisers = [](int t, const SeState&) { return make_last_tanh(t); };
  p.T = T;
  p.expectation = gh;
  const SeTrajectory se = run_state_evolution(p);
  const auto tau = gaussian_amp_tau_recursion(DenoiserSchedule(T, make_last_tanh(1)), 1.0, T);
  double e = 0.0;
  for (int t = 0; t < T; ++t) e = std::max(e, std::abs(se.states[t].Sigma(t, t) - tau[t]));
  check(rep, "se-equivalence", "semicircle recursion versus scalar recursion", e, 0.0, 1e-8);

  const SeTrajectory mp = ri_amp_se(law, fixed_schedule(last_tanh_schedule(T)), 1.0, T, gh);
  double rel = 0.0;
  for (const auto& st : mp.states) {
    rel = std::max(rel, (st.Delta - delta_from_relation(st.DeltaBar, st.Phi, st.Sigma)).cwiseAbs().maxCoeff());
  }
  check(rep, "se-equivalence", "second-moment relation", rel, 0.0, 1e-9);
}

void suite_orthogonality(VerifyReport& rep) {
  constexpr int N = 1000;
  constexpr int T = 3;
  constexpr int seeds = 5;
  const auto grid = quantile_grid(SpectralLaw::semicircle(), N).atoms();
  const SpectralLaw center = SpectralLaw::discrete(grid);
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(T, T + 1);
  for (int s = 0; s < seeds; ++s) {
    auto W = std::make_shared<const SpectralOperator>(build_rot_invariant(grid, 500 + s));
    std::mt19937_64 rng(900 + s);
    std::normal_distribution<double> normal;
    Eigen::VectorXd u1(N);
    for (int i = 0; i < N; ++i) u1[i] = normal(rng);
    const AmpRun run = run_ri_amp(W, center, last_tanh_schedule(T), u1, T);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j <= T; ++j) avg(i, j) += run.r[i].dot(run.ubar[j]) / N / seeds;
  }
  check(rep, "orthogonality", "mean |r_s . ubar_j| / N", avg.cwiseAbs().maxCoeff(), 0.0, 0.05);
}

}  // namespace

VerifyReport cmd_verify(const std::string& suite, const VerifyOptions& opts) {
  static const std::set<std::string> names{"cumulants", "unfolding", "se-equivalence", "orthogonality", "all"};
  if (!names.count(suite)) throw ValidationError("unknown suite '" + suite + "'");
  VerifyReport rep;
  const bool all = suite == "all";
  if (all || suite == "cumulants") suite_cumulants(rep);
  if (all || suite == "unfolding") suite_unfolding(rep, opts);
  if (all || suite == "se-equivalence") suite_se_equivalence(rep);
  if (all || suite == "orthogonality") suite_orthogonality(rep);
  return rep;
}

}  // namespace amp_lab
