#ifndef AMP_LAB_TESTS_ORACLES_HPP
#define AMP_LAB_TESTS_ORACLES_HPP

// Reference computations that share no code with the library. Each one takes
// the slow, obvious route: full set-partition enumeration, fine composite
// rules on closed-form densities, trapezoidal Gaussian integrals.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Blocks = std::vector<std::vector<int>>;

// Every set partition of {1..k} from restricted growth strings.
inline std::vector<Blocks> all_set_partitions(int k) {
  std::vector<Blocks> out;
  std::vector<int> a(static_cast<std::size_t>(k), 0);
  std::function<void(int, int)> rec = [&](int i, int maxb) {
    if (i == k) {
      Blocks b(static_cast<std::size_t>(maxb + 1));
      for (int j = 0; j < k; ++j) b[static_cast<std::size_t>(a[j])].push_back(j + 1);
      out.push_back(b);
      return;
    }
    for (int v = 0; v <= maxb + 1; ++v) {
      a[static_cast<std::size_t>(i)] = v;
      rec(i + 1, std::max(maxb, v));
    }
  };
  if (k == 0) return {Blocks{}};
  a[0] = 0;
  rec(1, 0);
  return out;
}

// Literal four-element test: a < b < c < d with a, c in one block and b, d in another.
inline bool crosses(const Blocks& p) {
  std::vector<int> owner;
  for (std::size_t bi = 0; bi < p.size(); ++bi)
    for (int e : p[bi]) {
      if (static_cast<int>(owner.size()) < e) owner.resize(static_cast<std::size_t>(e), -1);
      owner[static_cast<std::size_t>(e - 1)] = static_cast<int>(bi);
    }
  const int k = static_cast<int>(owner.size());
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      for (int c = b + 1; c < k; ++c)
        for (int d = c + 1; d < k; ++d)
          if (owner[a] == owner[c] && owner[b] == owner[d] && owner[a] != owner[b]) return true;
  return false;
}

inline std::vector<Blocks> nc_partitions(int k) {
  std::vector<Blocks> out;
  for (auto& p : all_set_partitions(k))
    if (!crosses(p)) out.push_back(p);
  return out;
}

// m_n = sum over NC(n) of the product of block cumulants.
inline std::vector<double> moments_from_cumulants(const std::vector<double>& kappa) {
  std::vector<double> m;
  for (int n = 1; n <= static_cast<int>(kappa.size()); ++n) {
    double s = 0.0;
    for (const auto& p : nc_partitions(n)) {
      double prod = 1.0;
      for (const auto& b : p) prod *= kappa[b.size() - 1];
      s += prod;
    }
    m.push_back(s);
  }
  return m;
}

// Inverts moments_from_cumulants one order at a time: the single-block term
// of NC(n) is kappa_n itself.
inline std::vector<double> cumulants_from_moments(const std::vector<double>& m) {
  std::vector<double> kappa;
  for (std::size_t n = 1; n <= m.size(); ++n) {
    kappa.push_back(0.0);
    const double rest = moments_from_cumulants(kappa)[n - 1];
    kappa.back() = m[n - 1] - rest;
  }
  return kappa;
}

inline std::uint64_t catalan_recurrence(int n) {
  std::vector<std::uint64_t> c(static_cast<std::size_t>(n + 1), 0);
  c[0] = 1;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i <= k; ++i) c[k + 1] += c[i] * c[k - i];
  return c[n];
}

// Composite Simpson with the substitution x = lo + (hi - lo)(1 - cos s)/2,
// which removes the square-root edges of the semicircle and MP densities.
inline double integrate_edge(const std::function<double(double)>& f, double lo, double hi, int n = 20000) {
  const double pi = std::numbers::pi;
  auto g = [&](double s) {
    const double x = lo + 0.5 * (hi - lo) * (1.0 - std::cos(s));
    return f(x) * 0.5 * (hi - lo) * std::sin(s);
  };
  const double h = pi / n;
  double acc = g(0.0) + g(pi);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * g(i * h);
  return acc * h / 3.0;
}

inline double semicircle_density(double x, double v = 1.0) {
  const double r2 = 4.0 * v - x * x;
  return r2 > 0 ? std::sqrt(r2) / (2.0 * std::numbers::pi * v) : 0.0;
}

// Unit-mean MP density with ratio alpha in (0, 1).
inline double mp_density(double x, double alpha) {
  const double a = (1 - std::sqrt(alpha)) * (1 - std::sqrt(alpha));
  const double b = (1 + std::sqrt(alpha)) * (1 + std::sqrt(alpha));
  if (x <= a || x >= b) return 0.0;
  return std::sqrt((b - x) * (x - a)) / (2.0 * std::numbers::pi * alpha * x);
}

inline double semicircle_expect(const std::function<double(double)>& f, double v = 1.0) {
  const double e = 2.0 * std::sqrt(v);
  return integrate_edge([&](double x) { return f(x) * semicircle_density(x, v); }, -e, e);
}

inline double mp_expect(const std::function<double(double)>& f, double alpha) {
  const double a = (1 - std::sqrt(alpha)) * (1 - std::sqrt(alpha));
  const double b = (1 + std::sqrt(alpha)) * (1 + std::sqrt(alpha));
  return integrate_edge([&](double x) { return f(x) * mp_density(x, alpha); }, a, b);
}

// E[h(G)] for G ~ N(0, 1) by the trapezoidal rule on [-14, 14]; the rule is
// geometrically convergent for analytic integrands decaying like exp(-x^2/2).
inline double gauss_expect(const std::function<double(double)>& h, int n = 4000) {
  const double L = 14.0, dx = 2.0 * L / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = -L + i * dx;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    acc += w * h(x) * std::exp(-0.5 * x * x);
  }
  return acc * dx / std::sqrt(2.0 * std::numbers::pi);
}

// tau_1^2 = m2, tau_{t+1}^2 = E[eta(tau_t G)^2].
inline std::vector<double> tau_recursion(const std::function<double(double)>& eta, double m2, int T) {
  std::vector<double> tau{m2};
  while (static_cast<int>(tau.size()) < T) {
    const double s = std::sqrt(tau.back());
    tau.push_back(gauss_expect([&](double g) {
      const double v = eta(s * g);
      return v * v;
    }));
  }
  return tau;
}

inline double sample_skewness(const Eigen::VectorXd& v) {
  const double m = v.mean();
  const Eigen::ArrayXd c = v.array() - m;
  const double s2 = c.square().mean();
  return c.cube().mean() / std::pow(s2, 1.5);
}

inline double sample_excess_kurtosis(const Eigen::VectorXd& v) {
  const double m = v.mean();
  const Eigen::ArrayXd c = v.array() - m;
  const double s2 = c.square().mean();
  return c.square().square().mean() / (s2 * s2) - 3.0;
}

}  // namespace oracle

#endif
