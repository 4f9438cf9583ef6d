#include "amp_lab/spectral_law.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "amp_lab/errors.hpp"

namespace amp_lab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kQuadTolerance = 1e-12;
constexpr double kQuadAbsFailure = 1e-9;
constexpr unsigned kMaxDepth = 30;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Square-root-edge laws are integrated in the angle variable theta, with
// lambda = c - h cos(theta); the Jacobian cancels the edge singularity.
struct EdgeMap {
  double a = 0.0;
  double b = 0.0;
  double center() const { return 0.5 * (a + b); }
  double half() const { return 0.5 * (b - a); }
  double lambda(double theta) const { return center() - half() * std::cos(theta); }
};

bool has_edge_map(const SpectralLaw::Kind& k) {
  return std::holds_alternative<Semicircle>(k) || std::holds_alternative<MarchenkoPastur>(k);
}

EdgeMap edge_map(const SpectralLaw& law) { return EdgeMap{law.support_lo(), law.support_hi()}; }

// Density times dlambda/dtheta, as a function of theta on [0, pi].
double theta_weight(const SpectralLaw& law, double theta) {
  const EdgeMap m = edge_map(law);
  const double s = std::sin(theta);
  const double num = m.half() * m.half() * s * s;
  const double lam = m.lambda(theta);
  if (const auto* sc = std::get_if<Semicircle>(&law.kind())) {
    return num / (2.0 * kPi * sc->variance);
  }
  const auto& mp = std::get<MarchenkoPastur>(law.kind());
  return num / (2.0 * kPi * mp.alpha * lam);
}

double checked_value(const std::function<double(double)>& f, double lambda) {
  const double v = f(lambda);
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "function is not finite at lambda = " << std::setprecision(17) << lambda;
    throw DomainError(os.str());
  }
  return v;
}

template <class F>
double adaptive(F&& f, double lo, double hi) {
  double err = 0.0;
  double l1 = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, lo, hi, kMaxDepth, kQuadTolerance, &err, &l1);
  if (!std::isfinite(v) || err > std::max(kQuadAbsFailure, kQuadTolerance * 1e3 * l1)) {
    std::ostringstream os;
    os << "adaptive quadrature did not converge on [" << lo << ", " << hi
       << "], error estimate " << err;
    throw NumericalFailure(os.str());
  }
  return v;
}

template <class F>
double gauss20(F&& f, double lo, double hi) {
  return boost::math::quadrature::gauss<double, 20>::integrate(f, lo, hi);
}

void validate_density_table(const std::vector<double>& x, const std::vector<double>& d) {
  if (x.size() != d.size() || x.size() < 2) {
    throw ValidationError("density table needs at least two (lambda, density) rows");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(d[i]) || d[i] < 0.0) {
      throw ValidationError("density table row " + std::to_string(i + 1) +
                            " is not a finite nonnegative value");
    }
    if (i > 0 && !(x[i] > x[i - 1])) {
      throw ValidationError("density table lambda column must be strictly increasing");
    }
  }
}

}  // namespace

double WeightedAtoms::expect(const std::function<double(double)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * checked_value(f, nodes[i]);
  return s;
}

double WeightedAtoms::total_mass() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

SpectralLaw::SpectralLaw(Kind kind) : kind_(std::move(kind)) {
  std::visit(Overloaded{
                 [&](const Semicircle& s) {
                   const double r = 2.0 * std::sqrt(s.variance);
                   lo_ = -r;
                   hi_ = r;
                 },
                 [&](const MarchenkoPastur& m) {
                   const double sa = std::sqrt(m.alpha);
                   lo_ = (1.0 - sa) * (1.0 - sa);
                   hi_ = (1.0 + sa) * (1.0 + sa);
                 },
                 [&](const DiscreteGrid& g) {
                   lo_ = g.atoms.front();
                   hi_ = g.atoms.back();
                 },
                 [&](const ExternalDensity& e) {
                   lo_ = e.lambda.front();
                   hi_ = e.lambda.back();
                 },
             },
             kind_);
}

SpectralLaw SpectralLaw::semicircle(double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw ValidationError("semicircle variance must be positive");
  }
  return SpectralLaw(Semicircle{variance});
}

SpectralLaw SpectralLaw::marchenko_pastur(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("Marchenko-Pastur aspect ratio must lie in (0, 1)");
  }
  return SpectralLaw(MarchenkoPastur{alpha});
}

SpectralLaw SpectralLaw::discrete(std::vector<double> atoms) {
  if (atoms.empty()) throw ValidationError("discrete law needs at least one atom");
  for (double a : atoms) {
    if (!std::isfinite(a)) throw ValidationError("discrete law atoms must be finite");
  }
  std::sort(atoms.begin(), atoms.end());
  return SpectralLaw(DiscreteGrid{std::move(atoms)});
}

SpectralLaw SpectralLaw::point_mass(double c) { return discrete({c}); }

SpectralLaw SpectralLaw::external_density(std::vector<double> lambda, std::vector<double> density) {
  validate_density_table(lambda, density);
  double mass = 0.0;
  for (std::size_t i = 0; i + 1 < lambda.size(); ++i) {
    mass += 0.5 * (density[i] + density[i + 1]) * (lambda[i + 1] - lambda[i]);
  }
  if (!(mass > 0.0)) throw ValidationError("density table has zero mass");
  for (double& d : density) d /= mass;
  return SpectralLaw(ExternalDensity{std::move(lambda), std::move(density)});
}

const std::vector<double>& SpectralLaw::atoms() const {
  const auto* g = std::get_if<DiscreteGrid>(&kind_);
  if (!g) throw UnsupportedVariant("law has no atom list");
  return g->atoms;
}

double SpectralLaw::support_bound() const { return std::max(std::abs(lo_), std::abs(hi_)); }

double SpectralLaw::density(double lambda) const {
  return std::visit(
      Overloaded{
          [&](const Semicircle& s) {
            const double r2 = 4.0 * s.variance - lambda * lambda;
            return r2 > 0.0 ? std::sqrt(r2) / (2.0 * kPi * s.variance) : 0.0;
          },
          [&](const MarchenkoPastur& m) {
            const double p = (hi_ - lambda) * (lambda - lo_);
            return p > 0.0 ? std::sqrt(p) / (2.0 * kPi * m.alpha * lambda) : 0.0;
          },
          [&](const DiscreteGrid&) { return 0.0; },
          [&](const ExternalDensity& e) {
            if (lambda < e.lambda.front() || lambda > e.lambda.back()) return 0.0;
            auto it = std::upper_bound(e.lambda.begin(), e.lambda.end(), lambda);
            std::size_t k = static_cast<std::size_t>(it - e.lambda.begin());
            if (k >= e.lambda.size()) k = e.lambda.size() - 1;
            const std::size_t j = k - 1;
            const double t = (lambda - e.lambda[j]) / (e.lambda[k] - e.lambda[j]);
            return (1.0 - t) * e.density[j] + t * e.density[k];
          },
      },
      kind_);
}

std::string SpectralLaw::describe() const {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const Semicircle& s) { os << "semicircle(variance=" << s.variance << ")"; },
                 [&](const MarchenkoPastur& m) { os << "marchenko-pastur(alpha=" << m.alpha << ")"; },
                 [&](const DiscreteGrid& g) { os << "discrete(" << g.atoms.size() << " atoms)"; },
                 [&](const ExternalDensity& e) { os << "density-table(" << e.lambda.size() << " rows)"; },
             },
             kind_);
  return os.str();
}

double expect(const SpectralLaw& law, const std::function<double(double)>& f) {
  const auto& k = law.kind();
  if (const auto* g = std::get_if<DiscreteGrid>(&k)) {
    double s = 0.0;
    for (double a : g->atoms) s += checked_value(f, a);
    return s / static_cast<double>(g->atoms.size());
  }
  if (has_edge_map(k)) {
    const EdgeMap m = edge_map(law);
    auto integrand = [&](double th) { return checked_value(f, m.lambda(th)) * theta_weight(law, th); };
    return adaptive(integrand, 0.0, kPi);
  }
  const auto& e = std::get<ExternalDensity>(k);
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < e.lambda.size(); ++i) {
    const double x0 = e.lambda[i];
    const double x1 = e.lambda[i + 1];
    const double d0 = e.density[i];
    const double d1 = e.density[i + 1];
    if (d0 == 0.0 && d1 == 0.0) continue;
    auto integrand = [&](double x) {
      const double t = (x - x0) / (x1 - x0);
      return checked_value(f, x) * ((1.0 - t) * d0 + t * d1);
    };
    s += adaptive(integrand, x0, x1);
  }
  return s;
}

double moment(const SpectralLaw& law, int n) {
  if (n < 0) throw ValidationError("moment order must be nonnegative");
  if (n == 0) return 1.0;
  // Catalan and Narayana closed forms keep the standard families exact.
  auto binom = [](int a, int b) {
    double r = 1.0;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return std::round(r);
  };
  const auto& k = law.kind();
  if (const auto* s = std::get_if<Semicircle>(&k)) {
    if (n % 2) return 0.0;
    const int h = n / 2;
    return binom(2 * h, h) / (h + 1) * std::pow(s->variance, h);
  }
  if (const auto* mp = std::get_if<MarchenkoPastur>(&k)) {
    double m = 0.0;
    for (int j = n; j >= 1; --j) m += binom(n, j) * binom(n, j - 1) / n * std::pow(mp->alpha, j - 1);
    return m;
  }
  return expect(law, [n](double x) { return std::pow(x, n); });
}

double cdf(const SpectralLaw& law, double x) {
  if (x < law.support_lo()) return 0.0;
  if (x >= law.support_hi()) return 1.0;
  const auto& k = law.kind();
  if (const auto* g = std::get_if<DiscreteGrid>(&k)) {
    auto it = std::upper_bound(g->atoms.begin(), g->atoms.end(), x);
    return static_cast<double>(it - g->atoms.begin()) / static_cast<double>(g->atoms.size());
  }
  if (has_edge_map(k)) {
    const EdgeMap m = edge_map(law);
    const double th = std::acos(std::clamp((m.center() - x) / m.half(), -1.0, 1.0));
    return adaptive([&](double t) { return theta_weight(law, t); }, 0.0, th);
  }
  const auto& e = std::get<ExternalDensity>(k);
  double F = 0.0;
  for (std::size_t i = 0; i + 1 < e.lambda.size(); ++i) {
    const double x0 = e.lambda[i];
    const double x1 = e.lambda[i + 1];
    const double slope = (e.density[i + 1] - e.density[i]) / (x1 - x0);
    if (x < x1) {
      const double s = x - x0;
      return F + e.density[i] * s + 0.5 * slope * s * s;
    }
    F += 0.5 * (e.density[i] + e.density[i + 1]) * (x1 - x0);
  }
  return 1.0;
}

SpectralLaw quantile_grid(const SpectralLaw& law, std::size_t N) {
  if (N == 0) throw ValidationError("quantile grid size must be positive");
  std::vector<double> out(N);
  auto level = [N](std::size_t i) { return (static_cast<double>(i) + 0.5) / static_cast<double>(N); };
  const auto& k = law.kind();

  if (const auto* g = std::get_if<DiscreteGrid>(&k)) {
    const std::size_t M = g->atoms.size();
    for (std::size_t i = 0; i < N; ++i) {
      auto idx = static_cast<std::size_t>(std::ceil(level(i) * static_cast<double>(M)));
      idx = std::clamp<std::size_t>(idx, 1, M);
      out[i] = g->atoms[idx - 1];
    }
    return SpectralLaw::discrete(std::move(out));
  }

  if (const auto* e = std::get_if<ExternalDensity>(&k)) {
    std::vector<double> cum(e->lambda.size(), 0.0);
    for (std::size_t j = 0; j + 1 < e->lambda.size(); ++j) {
      cum[j + 1] = cum[j] + 0.5 * (e->density[j] + e->density[j + 1]) * (e->lambda[j + 1] - e->lambda[j]);
    }
    for (std::size_t i = 0; i < N; ++i) {
      const double p = level(i);
      auto it = std::upper_bound(cum.begin(), cum.end(), p);
      std::size_t j = static_cast<std::size_t>(it - cum.begin());
      j = std::clamp<std::size_t>(j, 1, cum.size() - 1) - 1;
      const double dx = e->lambda[j + 1] - e->lambda[j];
      const double A = 0.5 * (e->density[j + 1] - e->density[j]) / dx;
      const double B = e->density[j];
      const double C = p - cum[j];
      const double disc = B * B + 4.0 * A * C;
      const double denom = B + std::sqrt(std::max(disc, 0.0));
      double s = denom > 0.0 ? 2.0 * C / denom : 0.0;
      out[i] = e->lambda[j] + std::clamp(s, 0.0, dx);
    }
    return SpectralLaw::discrete(std::move(out));
  }

  // Square-root-edge families: tabulate the cdf in theta, then solve inside a panel.
  constexpr int kPanels = 64;
  const EdgeMap m = edge_map(law);
  auto w = [&](double t) { return theta_weight(law, t); };
  std::vector<double> cum(kPanels + 1, 0.0);
  const double dth = kPi / kPanels;
  for (int j = 0; j < kPanels; ++j) cum[j + 1] = cum[j] + gauss20(w, j * dth, (j + 1) * dth);
  const double total = cum[kPanels];
  for (std::size_t i = 0; i < N; ++i) {
    const double p = level(i) * total;
    auto it = std::upper_bound(cum.begin(), cum.end(), p);
    int j = static_cast<int>(it - cum.begin());
    j = std::clamp(j, 1, kPanels) - 1;
    const double t0 = j * dth;
    const double t1 = (j + 1) * dth;
    auto g = [&](double th) { return cum[j] + gauss20(w, t0, th) - p; };
    double g0 = g(t0);
    double g1 = g(t1);
    double th;
    if (g0 >= 0.0) {
      th = t0;
    } else if (g1 <= 0.0) {
      th = t1;
    } else {
      boost::uintmax_t iters = 200;
      auto tol = boost::math::tools::eps_tolerance<double>(52);
      auto bracket = boost::math::tools::toms748_solve(g, t0, t1, g0, g1, tol, iters);
      if (iters >= 200) throw NumericalFailure("inverse-cdf bracketing did not converge");
      th = 0.5 * (bracket.first + bracket.second);
    }
    out[i] = m.lambda(th);
  }
  return SpectralLaw::discrete(std::move(out));
}

bool has_closed_form_stieltjes(const SpectralLaw& law) { return has_edge_map(law.kind()); }

std::complex<double> stieltjes_closed_form(const SpectralLaw& law, std::complex<double> z) {
  using C = std::complex<double>;
  const auto& k = law.kind();
  // sqrt(z - a) sqrt(z - b) is the branch that behaves like z at infinity.
  const C root = std::sqrt(z - law.support_lo()) * std::sqrt(z - law.support_hi());
  if (const auto* s = std::get_if<Semicircle>(&k)) {
    return (z - root) / (2.0 * s->variance);
  }
  if (const auto* mp = std::get_if<MarchenkoPastur>(&k)) {
    return (z - (1.0 - mp->alpha) - root) / (2.0 * mp->alpha * z);
  }
  throw UnsupportedVariant("no closed-form Stieltjes transform for " + law.describe());
}

std::complex<double> stieltjes(const SpectralLaw& law, std::complex<double> z) {
  if (z.imag() == 0.0 && z.real() >= law.support_lo() && z.real() <= law.support_hi()) {
    throw DomainError("Stieltjes transform evaluated on the real axis inside the support");
  }
  const auto& k = law.kind();
  if (const auto* g = std::get_if<DiscreteGrid>(&k)) {
    std::complex<double> s = 0.0;
    for (double a : g->atoms) s += 1.0 / (z - a);
    return s / static_cast<double>(g->atoms.size());
  }
  if (has_edge_map(k)) {
    const EdgeMap m = edge_map(law);
    auto part = [&](bool imag) {
      return adaptive(
          [&](double th) {
            const std::complex<double> v = theta_weight(law, th) / (z - m.lambda(th));
            return imag ? v.imag() : v.real();
          },
          0.0, kPi);
    };
    return {part(false), part(true)};
  }
  auto re = expect(law, [&](double x) { return (1.0 / (z - x)).real(); });
  auto im = expect(law, [&](double x) { return (1.0 / (z - x)).imag(); });
  return {re, im};
}

WeightedAtoms quadrature_rule(const SpectralLaw& law, int panels) {
  if (panels < 1) throw ValidationError("quadrature rule needs at least one panel");
  using GL = boost::math::quadrature::gauss<double, 20>;
  WeightedAtoms rule;
  const auto& k = law.kind();
  if (const auto* g = std::get_if<DiscreteGrid>(&k)) {
    rule.nodes = g->atoms;
    rule.weights.assign(g->atoms.size(), 1.0 / static_cast<double>(g->atoms.size()));
    return rule;
  }
  const auto& absc = GL::abscissa();
  const auto& wts = GL::weights();
  // Boost stores the nonnegative half of the symmetric rule; 20 is even so no zero node.
  auto push_panel = [&](double lo, double hi, const std::function<double(double)>& weight_of,
                        const std::function<double(double)>& node_of) {
    const double c = 0.5 * (lo + hi);
    const double h = 0.5 * (hi - lo);
    for (std::size_t i = 0; i < absc.size(); ++i) {
      for (int sgn : {-1, 1}) {
        const double x = c + sgn * h * absc[i];
        rule.nodes.push_back(node_of(x));
        rule.weights.push_back(h * wts[i] * weight_of(x));
      }
    }
  };
  if (has_edge_map(k)) {
    const EdgeMap m = edge_map(law);
    const double dth = kPi / panels;
    for (int j = 0; j < panels; ++j) {
      push_panel(j * dth, (j + 1) * dth, [&](double th) { return theta_weight(law, th); },
                 [&](double th) { return m.lambda(th); });
    }
  } else {
    const auto& e = std::get<ExternalDensity>(k);
    for (std::size_t j = 0; j + 1 < e.lambda.size(); ++j) {
      push_panel(e.lambda[j], e.lambda[j + 1], [&](double x) { return law.density(x); },
                 [](double x) { return x; });
    }
  }
  const double mass = rule.total_mass();
  for (double& w : rule.weights) w /= mass;
  return rule;
}

SpectralLaw load_law_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open spectral file '" + path + "'");
  std::vector<double> col1;
  std::vector<double> col2;
  int columns = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream is(line);
    std::vector<double> vals;
    std::string tok;
    while (is >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": cannot parse '" + tok + "'");
      }
      vals.push_back(v);
    }
    if (vals.empty()) continue;
    if (vals.size() > 2) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected one or two columns");
    }
    const int c = static_cast<int>(vals.size());
    if (columns == 0) columns = c;
    if (c != columns) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    }
    col1.push_back(vals[0]);
    if (c == 2) col2.push_back(vals[1]);
  }
  if (columns == 0) throw ValidationError(path + ": no data rows");
  if (columns == 1) return SpectralLaw::discrete(std::move(col1));
  return SpectralLaw::external_density(std::move(col1), std::move(col2));
}

void save_atoms_file(const std::string& path, const std::vector<double>& atoms) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "# eigenvalue atoms, one per line\n" << std::setprecision(17);
  for (double a : atoms) out << a << "\n";
}

}  // namespace amp_lab
