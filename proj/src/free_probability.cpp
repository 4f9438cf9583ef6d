#include "amp_lab/free_probability.hpp"

#include <algorithm>
#include <array>
#include <mutex>
#include <random>

namespace amp_lab {

namespace {

// Elements are placed left to right. An element either opens a block or joins
// an open block; joining closes every block opened after it, which is exactly
// the condition that no later element can create a crossing.
void nc_recurse(int next, int k, std::vector<std::vector<int>>& blocks, std::vector<int>& open,
                std::vector<Partition>& out) {
  if (next > k) {
    Partition p = blocks;
    std::sort(p.begin(), p.end());
    out.push_back(std::move(p));
    return;
  }
  blocks.push_back({next});
  open.push_back(static_cast<int>(blocks.size()) - 1);
  nc_recurse(next + 1, k, blocks, open, out);
  open.pop_back();
  blocks.pop_back();

  for (std::size_t pos = 0; pos < open.size(); ++pos) {
    std::vector<int> saved(open.begin() + static_cast<long>(pos) + 1, open.end());
    const int b = open[pos];
    open.resize(pos + 1);
    blocks[b].push_back(next);
    nc_recurse(next + 1, k, blocks, open, out);
    blocks[b].pop_back();
    open.insert(open.end(), saved.begin(), saved.end());
  }
}

void check_cap(int k) {
  if (k < 1) throw ValidationError("partition size must be positive");
  if (k > kCombinatoricsCap) throw SizeLimitError("non-crossing enumeration supports k <= 12");
}

void tuple_recurse(int m, int l, int prefix, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (m > l) {
    if (prefix == l) out.push_back(cur);
    return;
  }
  for (int s = 0; prefix + s <= m && prefix + s <= l; ++s) {
    cur[m - 1] = s;
    tuple_recurse(m + 1, l, prefix + s, cur, out);
  }
  cur[m - 1] = 0;
}

}  // namespace

std::vector<Partition> enumerate_nc_partitions(int k) {
  check_cap(k);
  std::vector<Partition> out;
  std::vector<std::vector<int>> blocks;
  std::vector<int> open;
  nc_recurse(1, k, blocks, open, out);
  std::sort(out.begin(), out.end());
  return out;
}

bool is_non_crossing(const Partition& p) {
  int k = 0;
  for (const auto& b : p) k += static_cast<int>(b.size());
  std::vector<int> label(k + 1, -1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (int e : p[i]) label[e] = static_cast<int>(i);
  }
  for (int a = 1; a <= k; ++a)
    for (int b = a + 1; b <= k; ++b)
      for (int c = b + 1; c <= k; ++c)
        for (int d = c + 1; d <= k; ++d)
          if (label[a] == label[c] && label[b] == label[d] && label[a] != label[b]) return false;
  return true;
}

std::uint64_t catalan(int n) {
  std::uint64_t c = 1;
  for (int i = 0; i < n; ++i) c = c * 2 * (2 * i + 1) / (i + 2);
  return c;
}

std::vector<std::vector<int>> enumerate_tuples(int l) {
  check_cap(l);
  std::vector<std::vector<int>> out;
  std::vector<int> cur(l, 0);
  tuple_recurse(1, l, 0, cur, out);
  return out;
}

std::vector<int> nc_to_tuple(const Partition& p, int k) {
  std::vector<int> s(k, 0);
  for (const auto& b : p) s[b.back() - 1] = static_cast<int>(b.size());
  return s;
}

Partition tuple_to_nc(const std::vector<int>& s) {
  Partition p;
  std::vector<int> pending;
  int prefix = 0;
  for (std::size_t m = 1; m <= s.size(); ++m) {
    pending.push_back(static_cast<int>(m));
    const int size = s[m - 1];
    prefix += size;
    if (size < 0 || prefix > static_cast<int>(m)) throw ValidationError("not an S(l) tuple");
    if (size == 0) continue;
    std::vector<int> block(pending.end() - size, pending.end());
    pending.resize(pending.size() - static_cast<std::size_t>(size));
    p.push_back(std::move(block));
  }
  if (!pending.empty()) throw ValidationError("tuple does not sum to its length");
  std::sort(p.begin(), p.end());
  return p;
}

const std::map<std::vector<int>, std::uint64_t>& nc_block_shapes(int k) {
  check_cap(k);
  static std::array<std::map<std::vector<int>, std::uint64_t>, kCombinatoricsCap + 1> cache;
  static std::array<std::once_flag, kCombinatoricsCap + 1> flags;
  std::call_once(flags[k], [k] {
    for (const auto& p : enumerate_nc_partitions(k)) {
      std::vector<int> shape;
      for (const auto& b : p) shape.push_back(static_cast<int>(b.size()));
      std::sort(shape.begin(), shape.end());
      ++cache[k][shape];
    }
  });
  return cache[k];
}

void PolyFamily::evaluate_all(double lambda, double* out) const {
  const double x = variable(lambda);
  out[0] = 1.0;
  for (int n = 1; n <= order; ++n) {
    double v = x * out[n - 1];
    if (kind == PolyKind::H) {
      v -= centering[n - 1];
    } else {
      for (int i = 1; i <= n; ++i) v -= centering[i - 1] * out[n - i];
    }
    out[n] = v;
  }
}

std::vector<double> PolyFamily::evaluate_all(double lambda) const {
  std::vector<double> out(order + 1);
  evaluate_all(lambda, out.data());
  return out;
}

double PolyFamily::evaluate(int n, double lambda) const {
  if (n < 0 || n > order) throw ValidationError("polynomial index out of range");
  return evaluate_all(lambda)[n];
}

PolyFamily poly_family_from_centering(PolyKind kind, std::vector<double> centering,
                                      std::function<double(double)> transform) {
  PolyFamily fam;
  fam.kind = kind;
  fam.order = static_cast<int>(centering.size());
  fam.centering = std::move(centering);
  fam.transform = std::move(transform);
  fam.coeffs.assign(fam.order + 1, {});
  fam.coeffs[0] = {1.0};
  for (int n = 1; n <= fam.order; ++n) {
    std::vector<double> c(n + 1, 0.0);
    for (int i = 0; i < n; ++i) c[i + 1] += fam.coeffs[n - 1][i];
    if (kind == PolyKind::H) {
      c[0] -= fam.centering[n - 1];
    } else {
      for (int i = 1; i <= n; ++i) {
        const auto& prev = fam.coeffs[n - i];
        for (std::size_t j = 0; j < prev.size(); ++j) c[j] -= fam.centering[i - 1] * prev[j];
      }
    }
    fam.coeffs[n] = std::move(c);
  }
  return fam;
}

PolyFamily build_poly_family(const SpectralLaw& law, PolyKind kind, int order,
                             std::function<double(double)> f) {
  if (order < 0 || order > kRecursionCap * 2) throw ValidationError("polynomial order out of range");
  if (kind == PolyKind::K && !f) throw ValidationError("K family needs a processing function");
  if (kind != PolyKind::K) f = {};

  // The Q constants are the free cumulants, known exactly for these two laws.
  if (kind == PolyKind::Q) {
    if (const auto* sc = std::get_if<Semicircle>(&law.kind())) {
      return poly_family_from_centering(kind, semicircle_cumulants(order, sc->variance));
    }
    if (const auto* mp = std::get_if<MarchenkoPastur>(&law.kind())) {
      return poly_family_from_centering(kind, marchenko_pastur_cumulants(order, mp->alpha));
    }
  }

  PolyFamily fam;
  fam.kind = kind;
  fam.transform = f;
  fam.order = 0;
  std::vector<double> buf(order + 1);
  for (int n = 1; n <= order; ++n) {
    // Members up to n-1 are fixed; the next constant is E[x member_{n-1}(x)].
    auto integrand = [&](double lambda) {
      fam.evaluate_all(lambda, buf.data());
      return fam.variable(lambda) * buf[n - 1];
    };
    if (law.is_discrete()) {
      double s = 0.0;
      for (double a : law.atoms()) s += integrand(a);
      fam.centering.push_back(s / static_cast<double>(law.atoms().size()));
    } else {
      fam.centering.push_back(expect(law, integrand));
    }
    fam.order = n;
  }
  return poly_family_from_centering(kind, std::move(fam.centering), std::move(f));
}

PartialMomentTable partial_moments_from_cumulants(const std::vector<double>& kappa, int order) {
  if (static_cast<int>(kappa.size()) < 2 * order) {
    throw ValidationError("partial moments need cumulants up to twice the order");
  }
  auto kap = [&](int i) { return i == 0 ? 1.0 : kappa[i - 1]; };
  const int width = 2 * order + 1;
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(order + 1, width);
  full(0, 0) = 1.0;
  for (int k = 1; k <= order; ++k) {
    for (int j = 0; j <= 2 * order - k; ++j) {
      double s = 0.0;
      for (int m = 0; m <= j + 1; ++m) s += full(k - 1, m) * kap(j + 1 - m);
      full(k, j) = s;
    }
  }
  PartialMomentTable t;
  t.order = order;
  t.c = full.leftCols(order + 1);
  return t;
}

PartialMomentTable partial_moments(const SpectralLaw& law, int order) {
  const PolyFamily q = build_poly_family(law, PolyKind::Q, 2 * order);
  return partial_moments_from_cumulants(q.centering, order);
}

std::vector<double> mc_cumulants(const MatVec& W, Eigen::Index N, int order, std::uint64_t seed) {
  if (order < 1) throw ValidationError("order must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd g(N);
  for (Eigen::Index i = 0; i < N; ++i) g[i] = nd(rng);
  const Eigen::VectorXd h = W(g);
  std::vector<Eigen::VectorXd> z{g};
  std::vector<double> kap;
  const double invN = 1.0 / static_cast<double>(N);
  for (int n = 1; n <= order; ++n) {
    kap.push_back(h.dot(z[n - 1]) * invN);
    if (n == order) break;
    Eigen::VectorXd zn = W(z[n - 1]);
    for (int i = 1; i <= n; ++i) zn -= kap[i - 1] * z[n - i];
    z.push_back(std::move(zn));
  }
  return kap;
}

std::vector<double> mc_cumulants(const Eigen::MatrixXd& W, int order, std::uint64_t seed) {
  return mc_cumulants([&W](const Eigen::VectorXd& v) { return Eigen::VectorXd(W * v); }, W.rows(),
                      order, seed);
}

std::vector<double> mc_moments(const MatVec& W, Eigen::Index N, int order, std::uint64_t seed) {
  if (order < 1) throw ValidationError("order must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd g(N);
  for (Eigen::Index i = 0; i < N; ++i) g[i] = nd(rng);
  std::vector<double> m;
  Eigen::VectorXd v = g;
  for (int n = 1; n <= order; ++n) {
    v = W(v);
    m.push_back(g.dot(v) / static_cast<double>(N));
  }
  return m;
}

std::vector<double> mc_moments(const Eigen::MatrixXd& W, int order, std::uint64_t seed) {
  return mc_moments([&W](const Eigen::VectorXd& v) { return Eigen::VectorXd(W * v); }, W.rows(),
                    order, seed);
}

std::vector<double> semicircle_cumulants(int order, double variance) {
  std::vector<double> k(order, 0.0);
  if (order >= 2) k[1] = variance;
  return k;
}

std::vector<double> marchenko_pastur_cumulants(int order, double alpha) {
  std::vector<double> k(order);
  double p = 1.0;
  for (int n = 0; n < order; ++n) {
    k[n] = p;
    p *= alpha;
  }
  return k;
}

}  // namespace amp_lab
