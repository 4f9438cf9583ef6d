#include "amp_lab/state_evolution.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <complex>
#include <ostream>
#include <random>

#include "amp_lab/errors.hpp"
#include "amp_lab/parallel.hpp"

namespace amp_lab {

GaussianRule gauss_hermite(int n) {
  if (n < 1) throw ValidationError("Gauss-Hermite rule needs at least one node");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw NumericalFailure("Gauss-Hermite eigenproblem failed");
  GaussianRule r;
  for (int k = 0; k < n; ++k) {
    r.nodes.push_back(es.eigenvalues()[k]);
    const double v = es.eigenvectors()(0, k);
    r.weights.push_back(v * v);
  }
  return r;
}

GaussianRule gauss_trapezoid(int n) {
  if (n < 2) throw ValidationError("trapezoid rule needs at least two nodes");
  const double L = std::sqrt(2.0 * std::log(1e17));
  const double h = 2.0 * L / (n - 1);
  GaussianRule r;
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = -L + h * k;
    r.nodes.push_back(x);
    r.weights.push_back(std::exp(-0.5 * x * x));
    total += r.weights.back();
  }
  for (double& w : r.weights) w /= total;
  return r;
}

namespace {

GaussianRule tensor_rule(ExpectationMethod m, int n) {
  return m == ExpectationMethod::Trapezoid ? gauss_trapezoid(n) : gauss_hermite(n);
}

}  // namespace

double NuMeasure::moment(int n) const {
  return atoms.expect([n](double x) { return std::pow(x, n); });
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Moment matrices assembled from quadrature or sampling are only PSD up to the
// accuracy of the expectation rule, and near-singular ones (a denoiser that has
// converged, a fully informative start) pick up slightly negative eigenvalues.
// The admissible violation follows the rule used for expectations of dimension t.
double psd_tolerance(const ExpectationConfig& cfg, int t) {
  if (cfg.method != ExpectationMethod::MonteCarlo && t <= 3) return 1e-6;
  return 10.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(cfg.samples, 1)));
}

// Factor S = L L^T through the eigendecomposition, tolerating rank deficiency.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& S, const char* what, double tol) {
  const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericalFailure(std::string("eigendecomposition of ") + what + " failed");
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -tol * scale) {
    std::ostringstream os;
    os << what << " is not positive semidefinite (min eigenvalue " << std::scientific << std::setprecision(3)
       << es.eigenvalues().minCoeff() << ", largest magnitude " << scale << ")";
    throw ValidationError(os.str());
  }
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

// Layout of the per-sample accumulator for a step of dimension t.
struct Layout {
  int t;
  int div, div2, uR, RR, uUbar, RUbar, uu, uU, xu, xR, err, err2, size;
  explicit Layout(int t_) : t(t_) {
    int o = 0;
    div = o, o += t;
    div2 = o, o += t;
    uR = o, o += t;
    RR = o, o += t * t;
    uUbar = o, o += t;       // j = 2..t stored at j-2 (slot t-1 unused)
    RUbar = o, o += t * t;   // (i, j) with j = 2..t
    uu = o, o += 1;
    uU = o, o += t;          // E[U_{t+1} U_j], j = 2..t
    xu = o, o += 1;
    xR = o, o += t;
    err = o, o += 1;
    err2 = o, o += 1;
    size = o;
  }
};

struct SampleWorkspace {
  std::vector<double> R, U, Ubar, grad;
};

void accumulate(const Denoiser& eta, const SeHistory& hist, double x, double w, const Layout& L,
                SampleWorkspace& ws, double* acc) {
  const int t = L.t;
  for (int j = 2; j <= t; ++j) {
    const double u = hist.eta[j - 2]->evaluate(std::span<const double>(ws.R.data(), j - 1));
    double ub = u;
    for (int i = 0; i < j - 1; ++i) ub -= hist.Phi(j - 1, i) * ws.R[i];
    ws.U[j - 1] = u;
    ws.Ubar[j - 1] = ub;
  }
  const std::span<const double> R(ws.R.data(), t);
  const double u = eta.evaluate(R);
  eta.gradient(R, std::span<double>(ws.grad.data(), t));
  if (!std::isfinite(u)) throw NumericalFailure("denoiser returned a non-finite value inside an expectation");
  for (int i = 0; i < t; ++i) {
    acc[L.div + i] += w * ws.grad[i];
    acc[L.div2 + i] += w * ws.grad[i] * ws.grad[i];
    acc[L.uR + i] += w * u * ws.R[i];
    acc[L.xR + i] += w * x * ws.R[i];
    for (int k = 0; k < t; ++k) acc[L.RR + i * t + k] += w * ws.R[i] * ws.R[k];
    for (int j = 2; j <= t; ++j) acc[L.RUbar + i * t + (j - 2)] += w * ws.R[i] * ws.Ubar[j - 1];
  }
  for (int j = 2; j <= t; ++j) {
    acc[L.uUbar + j - 2] += w * u * ws.Ubar[j - 1];
    acc[L.uU + j - 2] += w * u * ws.U[j - 1];
  }
  acc[L.uu] += w * u * u;
  acc[L.xu] += w * x * u;
  const double e = (u - x) * (u - x);
  acc[L.err] += w * e;
  acc[L.err2] += w * e * e;
}

}  // namespace

StepMoments gaussian_expectations(const Denoiser& eta, const GaussianModel& model, const SeHistory& hist,
                                  const ExpectationConfig& cfg) {
  const int t = static_cast<int>(model.S.rows());
  if (t < 1 || model.S.cols() != t) throw ValidationError("covariance must be a non-empty square matrix");
  if (eta.arity() != t) throw ValidationError("denoiser arity does not match the covariance dimension");
  if (static_cast<int>(hist.eta.size()) < t - 1 || hist.Phi.rows() < t) {
    throw ValidationError("history too short for the requested step");
  }
  const Eigen::VectorXd beta = model.beta.size() == t ? model.beta : Eigen::VectorXd::Zero(t);
  const Eigen::MatrixXd Lf = psd_factor(model.S, "state-evolution covariance", psd_tolerance(cfg, t));
  const Layout L(t);

  ExpectationMethod method = cfg.method;
  if (method == ExpectationMethod::Auto) method = t <= 3 ? ExpectationMethod::Trapezoid : ExpectationMethod::MonteCarlo;
  if (method != ExpectationMethod::MonteCarlo && t > 3) {
    throw ValidationError("tensor quadrature is limited to three dimensions");
  }

  // Signal support: prior atoms, a Hermite rule for the Gaussian prior, or zero.
  std::vector<double> xs{0.0};
  std::vector<double> xw{1.0};
  const bool mc = method == ExpectationMethod::MonteCarlo;
  if (model.prior && !mc) {
    if (model.prior->kind() == PriorKind::Gaussian) {
      const auto gh = tensor_rule(method, cfg.points);
      xs = gh.nodes;
      xw = gh.weights;
    } else {
      xs = model.prior->support();
      xw = model.prior->probabilities();
    }
  }

  const int shards = std::max(1, cfg.shards);
  std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(shards), Eigen::VectorXd::Zero(L.size));
  std::size_t total = 0;

  if (mc) {
    if (cfg.samples < 2) throw ValidationError("Monte Carlo needs at least two samples");
    total = cfg.samples;
    const std::size_t base = cfg.samples / shards;
    const std::size_t extra = cfg.samples % shards;
    parallel_for(static_cast<std::size_t>(shards), cfg.threads, [&](std::size_t s) {
      const std::size_t n = base + (s < extra ? 1 : 0);
      std::mt19937_64 rng(splitmix(cfg.seed ^ splitmix(static_cast<std::uint64_t>(t) * 0x10001ULL + s)));
      std::normal_distribution<double> normal;
      SampleWorkspace ws{std::vector<double>(t), std::vector<double>(t), std::vector<double>(t),
                         std::vector<double>(t)};
      Eigen::VectorXd g(t);
      double* acc = partial[s].data();
      const double w = 1.0 / static_cast<double>(cfg.samples);
      for (std::size_t k = 0; k < n; ++k) {
        const double x = model.prior ? model.prior->sample(rng) : 0.0;
        for (int i = 0; i < t; ++i) g[i] = normal(rng);
        const Eigen::VectorXd z = Lf * g;
        for (int i = 0; i < t; ++i) ws.R[i] = beta[i] * x + z[i];
        accumulate(eta, hist, x, w, L, ws, acc);
      }
    });
  } else {
    const auto gh = tensor_rule(method, cfg.points);
    const std::size_t P = gh.nodes.size();
    std::size_t grid = 1;
    for (int i = 0; i < t; ++i) grid *= P;
    const std::size_t count = grid * xs.size();
    total = count;
    parallel_for(static_cast<std::size_t>(shards), cfg.threads, [&](std::size_t s) {
      SampleWorkspace ws{std::vector<double>(t), std::vector<double>(t), std::vector<double>(t),
                         std::vector<double>(t)};
      Eigen::VectorXd g(t);
      double* acc = partial[s].data();
      const std::size_t lo = count * s / shards;
      const std::size_t hi = count * (s + 1) / shards;
      for (std::size_t idx = lo; idx < hi; ++idx) {
        std::size_t rest = idx % grid;
        const std::size_t xi = idx / grid;
        double w = xw[xi];
        for (int i = 0; i < t; ++i) {
          const std::size_t p = rest % P;
          rest /= P;
          g[i] = gh.nodes[p];
          w *= gh.weights[p];
        }
        const Eigen::VectorXd z = Lf * g;
        for (int i = 0; i < t; ++i) ws.R[i] = beta[i] * xs[xi] + z[i];
        accumulate(eta, hist, xs[xi], w, L, ws, acc);
      }
    });
  }

  const Eigen::VectorXd a = pairwise_sum(partial.data(), partial.size(), Eigen::VectorXd(Eigen::VectorXd::Zero(L.size)));
  StepMoments m;
  m.evaluations = total;
  m.divergence = a.segment(L.div, t);
  m.divergence_stderr = Eigen::VectorXd::Zero(t);
  if (mc) {
    const double M = static_cast<double>(total);
    for (int i = 0; i < t; ++i) {
      const double var = std::max(0.0, a[L.div2 + i] - m.divergence[i] * m.divergence[i]);
      m.divergence_stderr[i] = std::sqrt(var / (M - 1.0));
    }
    const double var = std::max(0.0, a[L.err2] - a[L.err] * a[L.err]);
    m.mse_stderr = std::sqrt(var / (M - 1.0));
  }
  const Eigen::VectorXd& d = m.divergence;
  const Eigen::VectorXd uR = a.segment(L.uR, t);
  const Eigen::VectorXd xR = a.segment(L.xR, t);

  // Ubar_{t+1} = U_{t+1} - sum_i d_i R_i; every moment below follows from the raw ones.
  m.alpha = a[L.xu] - d.dot(xR);
  m.overlap = a[L.xu];
  m.mse = a[L.err];
  m.ubar_cross = Eigen::VectorXd::Zero(t + 1);
  m.u_cross = Eigen::VectorXd::Zero(t + 1);
  m.ubar_cross[0] = hist.init_signal * m.alpha;
  m.u_cross[0] = hist.init_signal * m.overlap;
  for (int j = 2; j <= t; ++j) {
    double s = a[L.uUbar + j - 2];
    for (int i = 0; i < t; ++i) s -= d[i] * a[L.RUbar + i * t + (j - 2)];
    m.ubar_cross[j - 1] = s;
    m.u_cross[j - 1] = a[L.uU + j - 2];
  }
  Eigen::MatrixXd RRs(t, t);
  for (int i = 0; i < t; ++i)
    for (int k = 0; k < t; ++k) RRs(i, k) = a[L.RR + i * t + k];
  m.ubar_cross[t] = a[L.uu] - 2.0 * d.dot(uR) + d.dot(RRs * d);
  m.u_cross[t] = a[L.uu];
  return m;
}

DenoiserFactory fixed_schedule(DenoiserSchedule eta) {
  auto s = std::make_shared<DenoiserSchedule>(std::move(eta));
  return [s](int t, const SeState&) {
    if (t < 1 || t > static_cast<int>(s->size())) throw ValidationError("denoiser schedule shorter than the horizon");
    return (*s)[t - 1];
  };
}

DenoiserFactory mmse_combining(Prior prior) {
  return [prior](int t, const SeState& st) -> DenoiserPtr {
    if (st.beta.size() != t || st.beta.norm() < 1e-12) return make_constant(t, 0.0);
    const Eigen::MatrixXd S = 0.5 * (st.Sigma + st.Sigma.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd inv(t);
    for (int i = 0; i < t; ++i) {
      const double l = es.eigenvalues()[i];
      inv[i] = l > 1e-10 * top ? 1.0 / l : 0.0;
    }
    const Eigen::VectorXd y = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * st.beta;
    const double q = st.beta.dot(y);
    if (!(q > 1e-12)) return make_constant(t, 0.0);
    const Eigen::VectorXd w = y / q;
    return make_combined_mmse(std::vector<double>(w.data(), w.data() + t), 1.0 / q, prior);
  };
}

Eigen::MatrixXd fan_se_form(const std::vector<double>& kappa, const Eigen::MatrixXd& Phi,
                            const Eigen::MatrixXd& Delta) {
  const Eigen::Index t = Phi.rows();
  if (t < 1) return Eigen::MatrixXd(0, 0);
  const Eigen::Index jmax = 2 * t - 2;
  if (static_cast<Eigen::Index>(kappa.size()) < jmax + 2) {
    throw ValidationError("the cumulant series needs " + std::to_string(jmax + 2) + " cumulants");
  }
  std::vector<Eigen::MatrixXd> pw{Eigen::MatrixXd::Identity(t, t)};
  for (Eigen::Index i = 1; i <= jmax; ++i) pw.push_back(pw.back() * Phi);
  // Phi^i vanishes for i >= t, so terms with both exponents >= t are skipped.
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(t, t);
  for (Eigen::Index j = 0; j <= jmax; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      if (i >= t || j - i >= t) continue;
      S += kappa[static_cast<std::size_t>(j + 1)] * pw[i] * Delta * pw[j - i].transpose();
    }
  }
  return S;
}

namespace {

using JFunction = std::function<Eigen::MatrixXd(double)>;

JFunction family_j(const PolyFamily& fam, const Eigen::MatrixXd& Phi) {
  const Eigen::Index t = Phi.rows();
  if (fam.order < t) throw ValidationError("polynomial family shorter than the horizon");
  std::vector<Eigen::MatrixXd> pw{Eigen::MatrixXd::Identity(t, t)};
  for (Eigen::Index i = 1; i < t; ++i) pw.push_back(pw.back() * Phi);
  return [fam, pw, t](double lambda) {
    const std::vector<double> m = fam.evaluate_all(lambda);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(t, t);
    for (Eigen::Index i = 1; i <= t; ++i) P += m[static_cast<std::size_t>(i)] * pw[i - 1];
    return P;
  };
}

Eigen::MatrixXd sandwich(const JFunction& J, const WeightedAtoms& rule, const Eigen::MatrixXd& D) {
  const Eigen::Index t = D.rows();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(t, t);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const Eigen::MatrixXd P = J(rule.nodes[k]);
    S += rule.weights[k] * (P * D * P.transpose());
  }
  return 0.5 * (S + S.transpose());
}

}  // namespace

Eigen::MatrixXd theorem_se_form(const PolyFamily& family, const WeightedAtoms& rule, const Eigen::MatrixXd& Phi,
                                const Eigen::MatrixXd& DeltaBar) {
  return sandwich(family_j(family, Phi), rule, DeltaBar);
}

Eigen::MatrixXd delta_from_relation(const Eigen::MatrixXd& DeltaBar, const Eigen::MatrixXd& Phi,
                                    const Eigen::MatrixXd& Sigma) {
  return DeltaBar + Phi * Sigma * Phi.transpose();
}

std::vector<double> gaussian_amp_tau_recursion(const DenoiserSchedule& eta, double init_second_moment, int T,
                                               int points) {
  if (T < 1) throw ValidationError("horizon must be positive");
  if (static_cast<int>(eta.size()) < T - 1) throw ValidationError("denoiser schedule shorter than the horizon");
  if (init_second_moment < 0.0) throw ValidationError("second moment must be nonnegative");
  const auto gh = gauss_trapezoid(points);
  std::vector<double> tau2{init_second_moment};
  for (int t = 1; t < T; ++t) {
    if (eta[t - 1]->arity() != 1) throw ValidationError("scalar recursion needs single-argument denoisers");
    const double tau = std::sqrt(tau2.back());
    double s = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
      const double r = tau * gh.nodes[k];
      const double u = eta[t - 1]->evaluate(std::span<const double>(&r, 1));
      s += gh.weights[k] * u * u;
    }
    tau2.push_back(s);
  }
  return tau2;
}

namespace {

std::complex<double> stieltjes_below_axis(const SpectralLaw& law, double lambda) {
  if (has_closed_form_stieltjes(law)) return stieltjes_closed_form(law, {lambda, -1e-300});
  // Richardson extrapolation of m(lambda - i eps) over eps, eps/2, eps/4.
  const double eps = 1e-2;
  const auto f = [&](double e) { return stieltjes(law, {lambda, -e}); };
  return (f(eps) - 6.0 * f(eps / 2.0) + 8.0 * f(eps / 4.0)) / 3.0;
}

double stieltjes_real(const SpectralLaw& law, double z) {
  if (has_closed_form_stieltjes(law)) return stieltjes_closed_form(law, {z, 0.0}).real();
  return stieltjes(law, {z, 0.0}).real();
}

}  // namespace

NuMeasure nu_measure_analytic(const SpectralLaw& law, double theta, int panels) {
  if (!(theta >= 0.0)) throw ValidationError("signal strength must be nonnegative");
  if (law.is_discrete()) throw UnsupportedVariant("the analytic overlap measure needs a continuous law");
  NuMeasure nu;
  nu.analytic = true;
  const WeightedAtoms rule = quadrature_rule(law, panels);
  nu.atoms.nodes = rule.nodes;
  nu.atoms.weights.resize(rule.nodes.size());
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const std::complex<double> m = stieltjes_below_axis(law, rule.nodes[k]);
    nu.atoms.weights[k] = rule.weights[k] / std::norm(1.0 - theta * m);
  }
  const double hi = law.support_hi();
  if (theta > 0.0 && theta * stieltjes_real(law, hi) > 1.0) {
    // theta m(z) decreases from above one at the edge to zero at infinity.
    double a = hi;
    double b = hi + 10.0 * theta;
    if (theta * stieltjes_real(law, b) > 1.0) throw NumericalFailure("outlier root not bracketed");
    for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, b); ++it) {
      const double c = 0.5 * (a + b);
      (theta * stieltjes_real(law, c) > 1.0 ? a : b) = c;
    }
    const double z = 0.5 * (a + b);
    const double h = 1e-5 * std::max(1.0, z);
    const double dm = (stieltjes_real(law, z + h) - stieltjes_real(law, z - h)) / (2.0 * h);
    nu.outlier = z;
    nu.outlier_weight = -1.0 / (theta * theta * dm);
    nu.atoms.nodes.push_back(z);
    nu.atoms.weights.push_back(nu.outlier_weight);
  }
  return nu;
}

NuMeasure nu_measure_empirical(const std::vector<OverlapMeasure>& samples) {
  if (samples.empty()) throw ValidationError("empirical overlap measure needs at least one sample");
  NuMeasure nu;
  nu.analytic = false;
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (const auto& s : samples) {
    nu.atoms.nodes.insert(nu.atoms.nodes.end(), s.atoms.begin(), s.atoms.end());
    for (double w : s.weights) nu.atoms.weights.push_back(w * inv);
  }
  return nu;
}

SeTrajectory run_state_evolution(const SeProblem& p) {
  if (p.T < 1 || p.T > kDefaultHorizonCap) {
    throw ValidationError("horizon must lie in [1, " + std::to_string(kDefaultHorizonCap) + "]");
  }
  if (!p.denoisers) throw ValidationError("state evolution needs a denoiser factory");
  const bool spiked = p.prior.has_value();
  if (spiked && !p.nu) throw ValidationError("spiked state evolution needs an overlap measure");
  if (spiked && std::abs(p.prior->second_moment() - 1.0) > 1e-12) {
    throw ValidationError("signal prior must have unit second moment");
  }
  const int T = p.T;
  const WeightedAtoms rule = quadrature_rule(p.law, p.quadrature_panels);

  const bool schedule = !p.f_schedule.empty();
  if (p.form == SeForm::OAMP && static_cast<int>(p.f_schedule.size()) < T) {
    throw ValidationError("matrix denoiser schedule shorter than the horizon");
  }
  if (p.form == SeForm::RIAMPMP && !schedule && !p.f && !p.family) {
    throw ValidationError("RI-AMP-MP state evolution needs a processing function");
  }
  if (schedule && p.form == SeForm::RIAMPMP && static_cast<int>(p.f_schedule.size()) < T) {
    throw ValidationError("processing schedule shorter than the horizon");
  }

  std::optional<PolyFamily> family = p.family;
  if (!family && !(p.form == SeForm::OAMP || (p.form == SeForm::RIAMPMP && schedule))) {
    const PolyKind kind = p.form == SeForm::RIAMP ? PolyKind::Q : (p.form == SeForm::RIAMPDF ? PolyKind::H : PolyKind::K);
    family = build_poly_family(p.law, kind, T, kind == PolyKind::K ? p.f : ScalarFn{});
  }
  std::vector<double> oamp_mean;
  if (p.form == SeForm::OAMP) {
    for (int i = 0; i < T; ++i) oamp_mean.push_back(rule.expect(p.f_schedule[i]));
  }
  const double law_mean = rule.expect([](double x) { return x; });

  auto make_j = [&](const Eigen::MatrixXd& Phi, const std::vector<double>& centers) -> JFunction {
    const Eigen::Index t = Phi.rows();
    if (p.form == SeForm::OAMP) {
      const auto fs = p.f_schedule;
      return [fs, centers, t](double lambda) {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(t, t);
        for (Eigen::Index i = 0; i < t; ++i) J(i, i) = fs[i](lambda) - centers[i];
        return J;
      };
    }
    if (family) return family_j(*family, Phi);
    const Eigen::MatrixXd E = ri_amp_mp_debias(rule, p.f_schedule, Phi);
    const auto fs = p.f_schedule;
    return [fs, E, Phi, t](double lambda) {
      Eigen::VectorXd fd(t);
      for (Eigen::Index i = 0; i < t; ++i) fd[i] = fs[i](lambda);
      return lemma_inverse_matrix(fd, E, Phi);
    };
  };

  SeTrajectory traj;
  traj.spiked = spiked;
  SeHistory hist;
  hist.init_signal = spiked ? p.init_signal : 0.0;
  hist.init_noise = p.init_noise;
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(T + 1, T + 1);
  Eigen::MatrixXd DeltaBar = Eigen::MatrixXd::Zero(T + 1, T + 1);
  Eigen::MatrixXd Delta = Eigen::MatrixXd::Zero(T + 1, T + 1);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(T + 1);
  DeltaBar(0, 0) = Delta(0, 0) = hist.init_signal * hist.init_signal + p.init_noise * p.init_noise;
  alpha[0] = hist.init_signal;

  for (int t = 1; t <= T; ++t) {
    SeState st;
    st.t = t;
    st.Phi = Phi.topLeftCorner(t, t);
    st.DeltaBar = DeltaBar.topLeftCorner(t, t);
    st.Delta = Delta.topLeftCorner(t, t);
    st.alpha = alpha.head(t);
    st.beta = Eigen::VectorXd::Zero(t);

    const JFunction J = make_j(st.Phi, oamp_mean);
    if (spiked) {
      const Eigen::MatrixXd inner = st.DeltaBar - st.alpha * st.alpha.transpose();
      psd_factor(inner, "DeltaBar - alpha alpha^T", psd_tolerance(p.expectation, std::max(1, t - 1)));
      Eigen::MatrixXd EJ = Eigen::MatrixXd::Zero(t, t);
      Eigen::MatrixXd S1 = Eigen::MatrixXd::Zero(t, t);
      for (std::size_t k = 0; k < p.nu->atoms.nodes.size(); ++k) {
        const Eigen::MatrixXd P = J(p.nu->atoms.nodes[k]);
        const Eigen::VectorXd v = P * st.alpha;
        EJ += p.nu->atoms.weights[k] * P;
        S1 += p.nu->atoms.weights[k] * (v * v.transpose());
      }
      st.beta = EJ * st.alpha;
      if (p.form == SeForm::OAMP) {
        // The overlap uses law-mean centering, matching the OAMP spiked recursion as stated.
        for (int i = 0; i < t; ++i) st.beta[i] = (EJ(i, i) + oamp_mean[i] - law_mean) * st.alpha[i];
      }
      S1 -= EJ * st.alpha * (EJ * st.alpha).transpose();
      st.Sigma1 = 0.5 * (S1 + S1.transpose());
      st.Sigma2 = sandwich(J, rule, inner);
      st.Sigma = st.Sigma1 + st.Sigma2;
    } else {
      st.Sigma = sandwich(J, rule, st.DeltaBar);
    }
    psd_factor(st.Sigma, "state-evolution covariance", psd_tolerance(p.expectation, t));

    DenoiserPtr eta = p.denoisers(t, st);
    if (!eta || eta->arity() != t) {
      throw ValidationError("denoiser " + std::to_string(t) + " must have arity " + std::to_string(t));
    }
    GaussianModel model{st.Sigma, st.beta, spiked ? p.prior : std::nullopt};
    hist.Phi = Phi.topLeftCorner(t, t);
    const StepMoments m = gaussian_expectations(*eta, model, hist, p.expectation);
    st.mse = spiked ? m.mse : m.u_cross[t];
    st.mse_stderr = m.mse_stderr;
    st.overlap = m.overlap;

    for (int i = 0; i < t; ++i) Phi(t, i) = m.divergence[i];
    for (int j = 0; j <= t; ++j) {
      DeltaBar(t, j) = DeltaBar(j, t) = m.ubar_cross[j];
      Delta(t, j) = Delta(j, t) = m.u_cross[j];
    }
    alpha[t] = spiked ? m.alpha : 0.0;
    hist.eta.push_back(eta);
    traj.denoisers.push_back(eta);
    traj.states.push_back(std::move(st));
  }
  return traj;
}

SeTrajectory ri_amp_se(const SpectralLaw& law, DenoiserFactory eta, double init_second_moment, int T,
                       const ExpectationConfig& cfg) {
  SeProblem p;
  p.form = SeForm::RIAMP;
  p.law = law;
  p.denoisers = std::move(eta);
  p.init_noise = std::sqrt(init_second_moment);
  p.T = T;
  p.expectation = cfg;
  return run_state_evolution(p);
}

SeTrajectory ri_amp_df_se(const SpectralLaw& law, DenoiserFactory eta, double init_second_moment, int T,
                          const ExpectationConfig& cfg) {
  SeProblem p;
  p.form = SeForm::RIAMPDF;
  p.law = law;
  p.denoisers = std::move(eta);
  p.init_noise = std::sqrt(init_second_moment);
  p.T = T;
  p.expectation = cfg;
  return run_state_evolution(p);
}

SeTrajectory oamp_se(const SpectralLaw& law, std::vector<ScalarFn> f_schedule, DenoiserFactory g,
                     double init_second_moment, int T, const ExpectationConfig& cfg) {
  SeProblem p;
  p.form = SeForm::OAMP;
  p.law = law;
  p.f_schedule = std::move(f_schedule);
  p.denoisers = std::move(g);
  p.init_noise = std::sqrt(init_second_moment);
  p.T = T;
  p.expectation = cfg;
  return run_state_evolution(p);
}

SeTrajectory spiked_se(const SpectralLaw& law, double theta, ScalarFn f, std::vector<ScalarFn> f_schedule,
                       DenoiserFactory eta, const Prior& prior, double omega, int T, const ExpectationConfig& cfg,
                       std::optional<NuMeasure> nu) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw ValidationError("initialization overlap must lie in [0, 1]");
  SeProblem p;
  p.form = SeForm::RIAMPMP;
  p.law = law;
  p.f = std::move(f);
  p.f_schedule = std::move(f_schedule);
  p.prior = prior;
  p.nu = nu ? std::move(nu) : std::optional<NuMeasure>(nu_measure_analytic(law, theta));
  p.init_signal = std::sqrt(omega);
  p.init_noise = std::sqrt(1.0 - omega);
  p.denoisers = std::move(eta);
  p.T = T;
  p.expectation = cfg;
  return run_state_evolution(p);
}

void write_se_csv(const SeTrajectory& traj, std::ostream& out) {
  out << "t,beta_t,sigma_tt,predicted_mse,predicted_mse_stderr,overlap\n";
  out.precision(12);
  for (const auto& s : traj.states) {
    const int i = s.t - 1;
    out << s.t << ',' << (s.beta.size() > i ? s.beta[i] : 0.0) << ',' << s.Sigma(i, i) << ',' << s.mse << ','
        << s.mse_stderr << ',' << s.overlap << '\n';
  }
}

}  // namespace amp_lab
