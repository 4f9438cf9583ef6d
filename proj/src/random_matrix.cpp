#include "amp_lab/random_matrix.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <cblas.h>
#include <lapacke.h>

#include "amp_lab/errors.hpp"

namespace amp_lab {

namespace {

// Some optimized BLAS builds return wrong results on certain CPUs without
// reporting an error (OpenBLAS AVX-512 kernels are a known case). Every
// accelerated dense operation is checked with an O(N^2) random probe; the first
// failure switches the process to the Eigen implementations.
std::atomic<bool> g_blas_ok{true};

bool blas_enabled() { return g_blas_ok.load(std::memory_order_relaxed); }

void report_blas_failure(const char* what) {
  if (g_blas_ok.exchange(false)) {
    std::fprintf(stderr,
                 "amp_lab: %s via BLAS/LAPACK failed its accuracy probe; using Eigen from now on. "
                 "Setting OPENBLAS_CORETYPE=Haswell usually restores the fast path.\n",
                 what);
  }
}

Eigen::VectorXd probe_vector(Eigen::Index N) {
  std::mt19937_64 rng(0x5eedULL + static_cast<std::uint64_t>(N));
  std::normal_distribution<double> nd;
  Eigen::VectorXd z(N);
  for (Eigen::Index i = 0; i < N; ++i) z[i] = nd(rng);
  return z;
}

// Rounding errors of a correct result stay many orders of magnitude below this;
// broken kernels produce order-one discrepancies.
double probe_tolerance(Eigen::Index N, const Eigen::VectorXd& z, double scale) {
  return 1e-8 * std::sqrt(static_cast<double>(N)) * z.norm() * std::max(1.0, scale);
}

}  // namespace

SpectralOperator::SpectralOperator(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors)
    : lambda_(std::move(eigenvalues)), O_(std::move(eigenvectors)) {
  if (O_.rows() != lambda_.size() || O_.cols() != lambda_.size()) {
    throw ValidationError("eigenvector matrix does not match the spectrum size");
  }
}

Eigen::VectorXd SpectralOperator::to_eigenbasis(const Eigen::VectorXd& v) const {
  return O_.transpose() * v;
}

Eigen::VectorXd SpectralOperator::from_eigenbasis(const Eigen::VectorXd& c) const { return O_ * c; }

Eigen::VectorXd SpectralOperator::apply_values(const Eigen::VectorXd& values, const Eigen::VectorXd& v) const {
  Eigen::VectorXd c = to_eigenbasis(v);
  c.array() *= values.array();
  return from_eigenbasis(c);
}

Eigen::VectorXd SpectralOperator::apply(const Eigen::VectorXd& v) const { return apply_values(lambda_, v); }

Eigen::VectorXd SpectralOperator::spectrum_values(const std::function<double(double)>& f) const {
  Eigen::VectorXd out(lambda_.size());
  std::vector<double> bad;
  for (Eigen::Index i = 0; i < lambda_.size(); ++i) {
    out[i] = f(lambda_[i]);
    if (!std::isfinite(out[i])) bad.push_back(lambda_[i]);
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os.precision(17);
    os << "matrix function undefined at eigenvalue(s):";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 8); ++i) os << " " << bad[i];
    if (bad.size() > 8) os << " ... (" << bad.size() << " total)";
    throw DomainError(os.str());
  }
  return out;
}

Eigen::MatrixXd SpectralOperator::dense() const {
  const Eigen::Index N = lambda_.size();
  if (N > 0 && (lambda_.array() == lambda_[0]).all()) {
    return lambda_[0] * Eigen::MatrixXd::Identity(N, N);
  }
  const Eigen::MatrixXd B = O_ * lambda_.asDiagonal();
  Eigen::MatrixXd A(N, N);
  bool done = false;
  if (blas_enabled()) {
    const auto n = static_cast<blasint>(N);
    cblas_dgemm(CblasColMajor, CblasNoTrans, CblasTrans, n, n, n, 1.0, B.data(), n, O_.data(), n, 0.0, A.data(), n);
    const Eigen::VectorXd z = probe_vector(N);
    const double err = (A * z - apply(z)).norm();
    done = A.allFinite() && err <= probe_tolerance(N, z, lambda_.cwiseAbs().maxCoeff());
    if (!done) report_blas_failure("dense matrix product");
  }
  if (!done) A.noalias() = B * O_.transpose();
  return 0.5 * (A + A.transpose());
}

SpectralLaw SpectralOperator::empirical_law() const {
  return SpectralLaw::discrete(std::vector<double>(lambda_.data(), lambda_.data() + lambda_.size()));
}

namespace {

bool decomposition_is_sound(const Eigen::MatrixXd& A, const Eigen::VectorXd& w, const Eigen::MatrixXd& V) {
  const Eigen::Index N = A.rows();
  if (!w.allFinite() || !V.allFinite()) return false;
  const Eigen::VectorXd z = probe_vector(N);
  const Eigen::VectorXd Vz = V * z;
  const double tol = probe_tolerance(N, z, 1.0);
  const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
  const double orth = (V.transpose() * Vz - z).norm();
  const double resid = (A * Vz - V * (w.array() * z.array()).matrix()).norm() / scale;
  return orth <= tol && resid <= tol;
}

}  // namespace

SpectralOperator eigendecompose(const Eigen::MatrixXd& A) {
  const Eigen::Index N = A.rows();
  if (A.cols() != N) throw ValidationError("eigendecomposition needs a square matrix");
  if (N > kDenseEigenCap) {
    throw ValidationError("dense eigendecomposition is capped at N = 8000");
  }
  if (blas_enabled()) {
    Eigen::MatrixXd V = A;
    Eigen::VectorXd w(N);
    const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(N), V.data(),
                                           static_cast<lapack_int>(N), w.data());
    if (info == 0 && decomposition_is_sound(A, w, V)) return SpectralOperator(std::move(w), std::move(V));
    report_blas_failure("symmetric eigendecomposition");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw NumericalFailure("symmetric eigendecomposition did not converge");
  if (!decomposition_is_sound(A, es.eigenvalues(), es.eigenvectors())) {
    throw NumericalFailure("symmetric eigendecomposition failed its accuracy probe");
  }
  return SpectralOperator(es.eigenvalues(), es.eigenvectors());
}

Eigen::MatrixXd sample_haar_orthogonal(Eigen::Index N, std::uint64_t seed) {
  if (N < 1) throw ValidationError("dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd G(N, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < N; ++i) G(i, j) = nd(rng);
  // Haar measure needs the QR factor with a positive diagonal in R.
  if (blas_enabled()) {
    const auto n = static_cast<lapack_int>(N);
    Eigen::MatrixXd Q = G;
    std::vector<double> tau(static_cast<std::size_t>(N));
    lapack_int info = LAPACKE_dgeqrf(LAPACK_COL_MAJOR, n, n, Q.data(), n, tau.data());
    const Eigen::MatrixXd R = Q.triangularView<Eigen::Upper>();
    if (info == 0) info = LAPACKE_dorgqr(LAPACK_COL_MAJOR, n, n, n, Q.data(), n, tau.data());
    if (info == 0 && Q.allFinite()) {
      const Eigen::VectorXd z = probe_vector(N);
      const Eigen::VectorXd Qz = Q * z;
      const double tol = probe_tolerance(N, z, 1.0);
      const double orth = (Q.transpose() * Qz - z).norm();
      const double recon = (Q * (R.triangularView<Eigen::Upper>() * z) - G * z).norm() / std::max(1.0, R.cwiseAbs().maxCoeff());
      if (orth <= tol && recon <= tol) {
        for (Eigen::Index j = 0; j < N; ++j) {
          if (R(j, j) < 0.0) Q.col(j) *= -1.0;
        }
        return Q;
      }
    }
    report_blas_failure("QR factorization");
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  const auto R = qr.matrixQR();
  for (Eigen::Index j = 0; j < N; ++j) {
    if (R(j, j) < 0.0) Q.col(j) *= -1.0;
  }
  return Q;
}

Eigen::MatrixXd sample_goe(Eigen::Index N, std::uint64_t seed) {
  if (N < 1) throw ValidationError("dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd G(N, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < N; ++i) G(i, j) = nd(rng);
  Eigen::MatrixXd W = (G + G.transpose()) / std::sqrt(2.0 * static_cast<double>(N));
  return W;
}

RotInvEnsemble build_rot_invariant(const std::vector<double>& grid, std::uint64_t seed) {
  if (grid.empty()) throw ValidationError("eigenvalue grid is empty");
  for (double g : grid) {
    if (!std::isfinite(g)) throw ValidationError("eigenvalue grid must be finite");
  }
  Eigen::VectorXd lam = Eigen::Map<const Eigen::VectorXd>(grid.data(), static_cast<Eigen::Index>(grid.size()));
  return SpectralOperator(std::move(lam), sample_haar_orthogonal(lam.size(), seed));
}

Eigen::MatrixXd matrix_function(const SpectralOperator& W, const std::function<double(double)>& f) {
  const Eigen::VectorXd v = W.spectrum_values(f);
  Eigen::MatrixXd A = W.eigenvectors() * v.asDiagonal() * W.eigenvectors().transpose();
  return 0.5 * (A + A.transpose());
}

Eigen::MatrixXd matrix_function(const Eigen::MatrixXd& W, const std::function<double(double)>& f) {
  return matrix_function(eigendecompose(W), f);
}

Eigen::MatrixXd trace_free_center(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw ValidationError("trace-free centering needs a square matrix");
  Eigen::MatrixXd out = A;
  const double tau = A.trace() / static_cast<double>(A.rows());
  out.diagonal().array() -= tau;
  return out;
}

Prior::Prior(PriorKind k, double p) : kind_(k), p_(p) {
  if (k == PriorKind::Rademacher) {
    support_ = {-1.0, 1.0};
    probs_ = {0.5, 0.5};
  } else if (k == PriorKind::SparseThreePoint) {
    const double a = 1.0 / std::sqrt(p);
    support_ = {-a, 0.0, a};
    probs_ = {0.5 * p, 1.0 - p, 0.5 * p};
  }
}

Prior Prior::rademacher() { return Prior(PriorKind::Rademacher, 1.0); }

Prior Prior::sparse_three_point(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("sparse prior needs p in (0, 1]");
  return Prior(PriorKind::SparseThreePoint, p);
}

Prior Prior::gaussian() { return Prior(PriorKind::Gaussian, 1.0); }

double Prior::second_moment() const {
  if (kind_ == PriorKind::Gaussian) return 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < support_.size(); ++i) s += probs_[i] * support_[i] * support_[i];
  return s;
}

double Prior::sample(std::mt19937_64& rng) const {
  if (kind_ == PriorKind::Gaussian) return std::normal_distribution<double>()(rng);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < support_.size(); ++i) {
    acc += probs_[i];
    if (u < acc) return support_[i];
  }
  return support_.back();
}

void Prior::posterior(double y, double s, double& mean, double& var) const {
  double lmax = -std::numeric_limits<double>::infinity();
  std::vector<double> l(support_.size());
  for (std::size_t i = 0; i < support_.size(); ++i) {
    const double x = support_[i];
    l[i] = std::log(probs_[i]) + (x * y - 0.5 * x * x) / s;
    lmax = std::max(lmax, l[i]);
  }
  double z = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < support_.size(); ++i) {
    const double w = std::exp(l[i] - lmax);
    z += w;
    m1 += w * support_[i];
    m2 += w * support_[i] * support_[i];
  }
  mean = m1 / z;
  var = std::max(m2 / z - mean * mean, 0.0);
}

double Prior::mmse(double y, double s) const {
  if (!(s > 0.0)) throw ValidationError("MMSE denoiser needs positive noise variance");
  switch (kind_) {
    case PriorKind::Rademacher:
      return std::tanh(y / s);
    case PriorKind::Gaussian:
      return y / (1.0 + s);
    case PriorKind::SparseThreePoint: {
      double m = 0.0;
      double v = 0.0;
      posterior(y, s, m, v);
      return m;
    }
  }
  return 0.0;
}

double Prior::mmse_derivative(double y, double s) const {
  switch (kind_) {
    case PriorKind::Rademacher: {
      const double t = std::tanh(y / s);
      return (1.0 - t * t) / s;
    }
    case PriorKind::Gaussian:
      return 1.0 / (1.0 + s);
    case PriorKind::SparseThreePoint: {
      double m = 0.0;
      double v = 0.0;
      posterior(y, s, m, v);
      return v / s;
    }
  }
  return 0.0;
}

std::string Prior::name() const {
  switch (kind_) {
    case PriorKind::Rademacher:
      return "rademacher";
    case PriorKind::Gaussian:
      return "gaussian";
    case PriorKind::SparseThreePoint:
      return "sparse(p=" + std::to_string(p_) + ")";
  }
  return "?";
}

SpikedInstance build_spiked(double theta, const Prior& prior, std::shared_ptr<const RotInvEnsemble> W,
                            std::uint64_t seed) {
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ValidationError("spike strength must be nonnegative");
  if (std::abs(prior.second_moment() - 1.0) > 1e-12) {
    throw ValidationError("signal prior must have unit second moment");
  }
  SpikedInstance inst;
  inst.theta = theta;
  const Eigen::Index N = W->dim();
  std::mt19937_64 rng(seed);
  inst.x_star.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) inst.x_star[i] = prior.sample(rng);
  inst.Y = W->dense();
  inst.Y.noalias() += (theta / static_cast<double>(N)) * inst.x_star * inst.x_star.transpose();
  inst.W = std::move(W);
  inst.Y_op = eigendecompose(inst.Y);
  return inst;
}

double OverlapMeasure::total_mass() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

double OverlapMeasure::moment(int n) const {
  double s = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) s += weights[i] * std::pow(atoms[i], n);
  return s;
}

OverlapMeasure overlap_measure(const SpikedInstance& inst) {
  OverlapMeasure m;
  const auto& op = inst.Y_op;
  const Eigen::VectorXd proj = op.to_eigenbasis(inst.x_star);
  const double invN = 1.0 / static_cast<double>(op.dim());
  m.atoms.assign(op.eigenvalues().data(), op.eigenvalues().data() + op.dim());
  m.weights.resize(op.dim());
  for (Eigen::Index i = 0; i < op.dim(); ++i) m.weights[i] = proj[i] * proj[i] * invN;
  return m;
}

namespace {
constexpr char kMagic[8] = {'A', 'M', 'P', 'L', 'A', 'B', 'M', '1'};
}

void save_matrix(const std::string& path, const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw ValidationError("container stores square matrices only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  const std::uint64_t N = static_cast<std::uint64_t>(A.rows());
  const std::uint32_t dtype = 1;
  const std::uint32_t reserved = 0;
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&N), sizeof N);
  out.write(reinterpret_cast<const char*>(&dtype), sizeof dtype);
  out.write(reinterpret_cast<const char*>(&reserved), sizeof reserved);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = A;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * N * N));
  if (!out) throw ValidationError("short write to '" + path + "'");
}

Eigen::MatrixXd load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  char magic[8];
  std::uint64_t N = 0;
  std::uint32_t dtype = 0;
  std::uint32_t reserved = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&N), sizeof N);
  in.read(reinterpret_cast<char*>(&dtype), sizeof dtype);
  in.read(reinterpret_cast<char*>(&reserved), sizeof reserved);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ValidationError("'" + path + "' is not a matrix container");
  }
  if (dtype != 1) throw ValidationError("unsupported container dtype " + std::to_string(dtype));
  if (N == 0 || N > 100000) throw ValidationError("implausible container dimension");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(N, N);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * N * N));
  if (!in) throw ValidationError("'" + path + "' is truncated");
  return rm;
}

}  // namespace amp_lab
