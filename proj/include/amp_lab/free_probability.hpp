#ifndef AMP_LAB_FREE_PROBABILITY_HPP
#define AMP_LAB_FREE_PROBABILITY_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "amp_lab/errors.hpp"
#include "amp_lab/spectral_law.hpp"

namespace amp_lab {

inline constexpr int kCombinatoricsCap = 12;
inline constexpr int kRecursionCap = 20;

// moments[i] = m_{i+1}, cumulants[i] = kappa_{i+1}, alpha[n][i] = coefficient of
// lambda^i in Q_n for n = 0..order-1.
template <class T>
struct BasicCumulantTable {
  int order = 0;
  std::vector<T> moments;
  std::vector<T> cumulants;
  std::vector<std::vector<T>> alpha;
};
using CumulantTable = BasicCumulantTable<double>;

template <class T>
BasicCumulantTable<T> moments_to_cumulants_t(const std::vector<T>& moments, int cap = kRecursionCap) {
  const int n = static_cast<int>(moments.size());
  if (n < 1) throw ValidationError("moments_to_cumulants needs at least one moment");
  if (n > cap) throw SizeLimitError("moment order exceeds the recursion cap");
  BasicCumulantTable<T> tab;
  tab.order = n;
  tab.moments = moments;
  tab.cumulants.assign(n, T(0));
  tab.alpha.assign(n, {});
  tab.alpha[0] = {T(1)};
  tab.cumulants[0] = moments[0];
  for (int k = 1; k < n; ++k) {
    auto& row = tab.alpha[k];
    row.assign(k + 1, T(0));
    row[k] = T(1);
    for (int i = 0; i < k; ++i) {
      T v = i > 0 ? tab.alpha[k - 1][i - 1] : T(0);
      for (int j = 1; j <= k - i; ++j) {
        const auto& prev = tab.alpha[k - j];
        if (i < static_cast<int>(prev.size())) v -= tab.cumulants[j - 1] * prev[i];
      }
      row[i] = v;
    }
    T kappa(0);
    for (int j = 0; j <= k; ++j) kappa += row[j] * moments[j];
    tab.cumulants[k] = kappa;
  }
  return tab;
}

inline CumulantTable moments_to_cumulants(const std::vector<double>& moments) {
  return moments_to_cumulants_t<double>(moments);
}

// A partition of {1..k}: blocks sorted by smallest element, elements ascending.
using Partition = std::vector<std::vector<int>>;

std::vector<Partition> enumerate_nc_partitions(int k);
bool is_non_crossing(const Partition& p);
std::uint64_t catalan(int n);

// S(l) tuples: s_m >= 0, prefix sums bounded by m, total l.
std::vector<std::vector<int>> enumerate_tuples(int l);
std::vector<int> nc_to_tuple(const Partition& p, int k);
Partition tuple_to_nc(const std::vector<int>& s);

// Multiset of block sizes (ascending) -> number of NC(k) partitions with that shape.
const std::map<std::vector<int>, std::uint64_t>& nc_block_shapes(int k);

template <class T>
std::vector<T> cumulants_to_moments_nc_t(const std::vector<T>& cumulants) {
  const int k = static_cast<int>(cumulants.size());
  if (k > kCombinatoricsCap) throw SizeLimitError("cumulants_to_moments_nc supports order <= 12");
  std::vector<T> m(k, T(0));
  for (int n = 1; n <= k; ++n) {
    T s(0);
    for (const auto& [shape, count] : nc_block_shapes(n)) {
      T prod(1);
      for (int b : shape) prod *= cumulants[b - 1];
      s += T(static_cast<long long>(count)) * prod;
    }
    m[n - 1] = s;
  }
  return m;
}

inline std::vector<double> cumulants_to_moments_nc(const std::vector<double>& cumulants) {
  return cumulants_to_moments_nc_t<double>(cumulants);
}

enum class PolyKind { Q, H, K };

// Member n is evaluated through its defining recursion in the variable
// x = transform(lambda) (x = lambda for Q and H), which stays stable where the
// monomial expansion would cancel badly.
class PolyFamily {
 public:
  PolyKind kind = PolyKind::Q;
  int order = 0;
  // centering[i] is the constant subtracted at step i+1: kappa, gamma or alpha-tilde.
  std::vector<double> centering;
  // coeffs[n][i] = coefficient of x^i in member n.
  std::vector<std::vector<double>> coeffs;
  std::function<double(double)> transform;

  double variable(double lambda) const { return transform ? transform(lambda) : lambda; }
  // Writes members 0..order evaluated at lambda.
  void evaluate_all(double lambda, double* out) const;
  std::vector<double> evaluate_all(double lambda) const;
  double evaluate(int n, double lambda) const;
};

// Builds members 0..order. For kind K the processing function f is required.
PolyFamily build_poly_family(const SpectralLaw& law, PolyKind kind, int order,
                             std::function<double(double)> f = {});
// Same construction from explicit centering constants (used for tampering and tests).
PolyFamily poly_family_from_centering(PolyKind kind, std::vector<double> centering,
                                      std::function<double(double)> transform = {});

struct PartialMomentTable {
  int order = 0;
  Eigen::MatrixXd c;  // c(k, j), 0 <= k, j <= order
};

PartialMomentTable partial_moments(const SpectralLaw& law, int order);
PartialMomentTable partial_moments_from_cumulants(const std::vector<double>& kappa, int order);

using MatVec = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

std::vector<double> mc_cumulants(const MatVec& W, Eigen::Index N, int order, std::uint64_t seed);
std::vector<double> mc_cumulants(const Eigen::MatrixXd& W, int order, std::uint64_t seed);
std::vector<double> mc_moments(const MatVec& W, Eigen::Index N, int order, std::uint64_t seed);
std::vector<double> mc_moments(const Eigen::MatrixXd& W, int order, std::uint64_t seed);

// Exact free cumulants of standard families.
std::vector<double> semicircle_cumulants(int order, double variance = 1.0);
std::vector<double> marchenko_pastur_cumulants(int order, double alpha);

}  // namespace amp_lab

#endif
