#ifndef AMP_LAB_RANDOM_MATRIX_HPP
#define AMP_LAB_RANDOM_MATRIX_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amp_lab/spectral_law.hpp"

namespace amp_lab {

inline constexpr Eigen::Index kDenseEigenCap = 8000;

// Symmetric matrix held as O diag(lambda) O^T. All products and matrix
// functions go through the factorization.
class SpectralOperator {
 public:
  SpectralOperator() = default;
  SpectralOperator(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors);

  Eigen::Index dim() const { return lambda_.size(); }
  const Eigen::VectorXd& eigenvalues() const { return lambda_; }
  const Eigen::MatrixXd& eigenvectors() const { return O_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  // O diag(values) O^T v, with values given on the eigenvalues.
  Eigen::VectorXd apply_values(const Eigen::VectorXd& values, const Eigen::VectorXd& v) const;
  Eigen::VectorXd to_eigenbasis(const Eigen::VectorXd& v) const;
  Eigen::VectorXd from_eigenbasis(const Eigen::VectorXd& c) const;
  // f evaluated on the spectrum; DomainError lists the offending eigenvalues.
  Eigen::VectorXd spectrum_values(const std::function<double(double)>& f) const;

  Eigen::MatrixXd dense() const;
  SpectralLaw empirical_law() const;

 private:
  Eigen::VectorXd lambda_;
  Eigen::MatrixXd O_;
};

// Symmetric eigendecomposition (ascending eigenvalues) through LAPACK dsyevd.
SpectralOperator eigendecompose(const Eigen::MatrixXd& A);

Eigen::MatrixXd sample_haar_orthogonal(Eigen::Index N, std::uint64_t seed);
Eigen::MatrixXd sample_goe(Eigen::Index N, std::uint64_t seed);

using RotInvEnsemble = SpectralOperator;
RotInvEnsemble build_rot_invariant(const std::vector<double>& grid, std::uint64_t seed);

Eigen::MatrixXd matrix_function(const Eigen::MatrixXd& W, const std::function<double(double)>& f);
Eigen::MatrixXd matrix_function(const SpectralOperator& W, const std::function<double(double)>& f);
Eigen::MatrixXd trace_free_center(const Eigen::MatrixXd& A);

enum class PriorKind { Rademacher, SparseThreePoint, Gaussian };

// Scalar signal prior with unit second moment and its scalar MMSE denoiser for
// the channel y = X + sqrt(s) G.
class Prior {
 public:
  static Prior rademacher();
  static Prior sparse_three_point(double p);
  static Prior gaussian();

  PriorKind kind() const { return kind_; }
  double sparsity() const { return p_; }
  double second_moment() const;
  double sample(std::mt19937_64& rng) const;
  double mmse(double y, double s) const;
  double mmse_derivative(double y, double s) const;
  // Support points and probabilities for discrete priors; empty for Gaussian.
  const std::vector<double>& support() const { return support_; }
  const std::vector<double>& probabilities() const { return probs_; }
  std::string name() const;

 private:
  Prior(PriorKind k, double p);
  void posterior(double y, double s, double& mean, double& var) const;
  PriorKind kind_;
  double p_ = 1.0;
  std::vector<double> support_;
  std::vector<double> probs_;
};

struct SpikedInstance {
  double theta = 0.0;
  Eigen::VectorXd x_star;
  std::shared_ptr<const RotInvEnsemble> W;
  Eigen::MatrixXd Y;
  // Eigendecomposition of Y, computed on construction.
  SpectralOperator Y_op;
};

SpikedInstance build_spiked(double theta, const Prior& prior, std::shared_ptr<const RotInvEnsemble> W,
                            std::uint64_t seed);

struct OverlapMeasure {
  std::vector<double> atoms;
  std::vector<double> weights;  // already divided by N
  double total_mass() const;
  double moment(int n) const;
};

OverlapMeasure overlap_measure(const SpikedInstance& inst);

// Binary container: 8-byte magic "AMPLABM1", uint64 N, uint32 dtype (1 = float64),
// uint32 reserved, then N*N row-major little-endian doubles.
void save_matrix(const std::string& path, const Eigen::MatrixXd& A);
Eigen::MatrixXd load_matrix(const std::string& path);

}  // namespace amp_lab

#endif
