#ifndef AMP_LAB_SPECTRAL_LAW_HPP
#define AMP_LAB_SPECTRAL_LAW_HPP

#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace amp_lab {

struct Semicircle {
  double variance = 1.0;
};

// Aspect ratio alpha in (0, 1); unit mean.
struct MarchenkoPastur {
  double alpha = 0.5;
};

// Equal-weight atoms, kept sorted.
struct DiscreteGrid {
  std::vector<double> atoms;
};

// Piecewise-linear density on tabulated nodes, normalized to unit mass.
struct ExternalDensity {
  std::vector<double> lambda;
  std::vector<double> density;
};

// A finite weighted point set used for expectations of vector- or matrix-valued
// integrands; weights sum to one.
struct WeightedAtoms {
  std::vector<double> nodes;
  std::vector<double> weights;

  double expect(const std::function<double(double)>& f) const;
  double total_mass() const;
};

class SpectralLaw {
 public:
  using Kind = std::variant<Semicircle, MarchenkoPastur, DiscreteGrid, ExternalDensity>;

  static SpectralLaw semicircle(double variance = 1.0);
  static SpectralLaw marchenko_pastur(double alpha);
  static SpectralLaw discrete(std::vector<double> atoms);
  static SpectralLaw point_mass(double c);
  static SpectralLaw external_density(std::vector<double> lambda, std::vector<double> density);

  const Kind& kind() const { return kind_; }
  bool is_discrete() const { return std::holds_alternative<DiscreteGrid>(kind_); }
  const std::vector<double>& atoms() const;

  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }
  double support_bound() const;

  // Density with respect to Lebesgue measure; zero for discrete laws.
  double density(double lambda) const;
  std::string describe() const;

 private:
  explicit SpectralLaw(Kind kind);
  Kind kind_;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

double moment(const SpectralLaw& law, int n);

// Absolute error at most 1e-9 for smooth f; throws DomainError when f is not
// finite somewhere on the support, NumericalFailure when quadrature stalls.
double expect(const SpectralLaw& law, const std::function<double(double)>& f);

double cdf(const SpectralLaw& law, double x);

// Midpoint quantiles F^{-1}((i - 1/2)/N), returned as a DiscreteGrid law.
SpectralLaw quantile_grid(const SpectralLaw& law, std::size_t N);

std::complex<double> stieltjes(const SpectralLaw& law, std::complex<double> z);

// Closed-form transform for the semicircle and Marchenko-Pastur families,
// valid on the whole cut plane. Throws UnsupportedVariant for other kinds.
std::complex<double> stieltjes_closed_form(const SpectralLaw& law, std::complex<double> z);
bool has_closed_form_stieltjes(const SpectralLaw& law);

// Fixed high-order rule: exact atoms for discrete laws, composite
// Gauss-Legendre otherwise (arcsine substitution on square-root edges).
WeightedAtoms quadrature_rule(const SpectralLaw& law, int panels = 24);

// Text format: '#' comments; one column gives atoms, two columns "lambda density".
SpectralLaw load_law_file(const std::string& path);
void save_atoms_file(const std::string& path, const std::vector<double>& atoms);

}  // namespace amp_lab

#endif
