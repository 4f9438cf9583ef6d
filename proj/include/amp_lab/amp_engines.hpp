#ifndef AMP_LAB_AMP_ENGINES_HPP
#define AMP_LAB_AMP_ENGINES_HPP

#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amp_lab/denoisers.hpp"
#include "amp_lab/free_probability.hpp"
#include "amp_lab/random_matrix.hpp"
#include "amp_lab/spectral_law.hpp"

namespace amp_lab {

inline constexpr int kDefaultHorizonCap = 10;

enum class Variant { GaussianAMP, FOM, RIAMP, RIAMPDF, RIAMPMP, OAMP };
std::string variant_name(Variant v);

using ScalarFn = std::function<double(double)>;

struct IterationDiagnostics {
  int t = 0;
  double norm_r = 0.0;  // ||r_t|| / sqrt(N)
  double norm_u = 0.0;  // ||u_{t+1}|| / sqrt(N)
  double max_trace_residual = std::numeric_limits<double>::quiet_NaN();
  // max |r_s . ubar_j| / N over s <= t, j <= t + 1
  double max_orthogonality_residual = 0.0;
  double reconstruction_error = std::numeric_limits<double>::quiet_NaN();
};

struct AmpRun {
  Variant variant = Variant::RIAMP;
  int T = 0;
  // r[t-1] = r_t for t = 1..T; u[t-1] = u_t and ubar[t-1] = ubar_t for t = 1..T+1.
  std::vector<Eigen::VectorXd> r;
  std::vector<Eigen::VectorXd> u;
  std::vector<Eigen::VectorXd> ubar;
  // (T+1) x (T+1) strictly lower triangular; entry (t, i) = <d u_{t+1} / d r_{i+1}>
  // in zero-based indices, so the leading t x t block is the divergence matrix
  // available when r_t is formed.
  Eigen::MatrixXd phi_hat;
  // T x T lower triangular; row t-1 holds the coefficients used to form r_t.
  Eigen::MatrixXd debias;
  std::shared_ptr<const SpectralOperator> matrix;
  // Family behind the debias rows (Q for RI-AMP, H for RI-AMP-DF, K for
  // RI-AMP-MP with a fixed processing function).
  std::optional<PolyFamily> family;
  // Per-iteration processing functions (RI-AMP-MP schedule, OAMP).
  std::vector<ScalarFn> f_schedule;
  // Gaussian AMP only: the coefficient of u_0 in r_1, and u_0 itself.
  double b1 = 0.0;
  Eigen::VectorXd u0;
  std::vector<IterationDiagnostics> diagnostics;

  Eigen::MatrixXd phi_block(int t) const { return phi_hat.topLeftCorner(t, t); }
};

struct EngineOptions {
  // Replaces the law-derived centering constants (kappa, gamma or alpha-tilde).
  std::optional<std::vector<double>> centering;
};

// Row data shared by every engine: evaluates u = eta(r_1..r_t) and the
// empirical partial derivatives.
struct DenoiserOutput {
  Eigen::VectorXd u;
  std::vector<double> divergences;
};
DenoiserOutput apply_denoiser(const Denoiser& eta, const std::vector<Eigen::VectorXd>& history);

Eigen::VectorXd orthogonal_decompose(const std::vector<Eigen::VectorXd>& history, const Eigen::VectorXd& u_next,
                                     const std::vector<double>& partials);

// sum_{i=1}^t kappa_i Phi^{i-1}, with t = phi.rows().
Eigen::MatrixXd ri_amp_debias(const std::vector<double>& kappa, const Eigen::MatrixXd& phi);

// Row-by-row solver of E[J(Lambda)] = 0 for the processing schedule f_1, f_2, ...
// Row t needs the leading t x t divergence block.
class MpDebiasSolver {
 public:
  MpDebiasSolver(WeightedAtoms atoms, std::vector<ScalarFn> f_schedule);
  Eigen::VectorXd next_row(const Eigen::MatrixXd& phi_t);
  int rows() const { return static_cast<int>(J_.size()); }
  Eigen::MatrixXd E() const;

 private:
  WeightedAtoms atoms_;
  std::vector<ScalarFn> fs_;
  std::vector<Eigen::VectorXd> F_;
  std::vector<Eigen::MatrixXd> J_;
  std::vector<Eigen::MatrixXd> PJ_;
  std::vector<Eigen::VectorXd> rows_;
};

Eigen::MatrixXd ri_amp_mp_debias(const WeightedAtoms& atoms, const std::vector<ScalarFn>& f_schedule,
                                 const Eigen::MatrixXd& phi);

// (I - diag(f) Phi + E Phi)^{-1} (diag(f) - E) for one value of lambda.
Eigen::MatrixXd lemma_inverse_matrix(const Eigen::VectorXd& fdiag, const Eigen::MatrixXd& E,
                                     const Eigen::MatrixXd& phi);

struct GaussianAmpInit {
  std::optional<Eigen::VectorXd> u0;  // zero when absent
  double b1 = 1.0;
};

AmpRun run_gaussian_amp(std::shared_ptr<const SpectralOperator> W, const DenoiserSchedule& eta,
                        const Eigen::VectorXd& u1, int T, const GaussianAmpInit& init = {});
AmpRun run_fom(std::shared_ptr<const SpectralOperator> W, const Eigen::MatrixXd& B, const DenoiserSchedule& eta,
               const Eigen::VectorXd& u1, int T);
AmpRun run_ri_amp(std::shared_ptr<const SpectralOperator> W, const SpectralLaw& law, const DenoiserSchedule& eta,
                  const Eigen::VectorXd& u1, int T, const EngineOptions& opts = {});
AmpRun run_ri_amp_df(std::shared_ptr<const SpectralOperator> W, const SpectralLaw& law,
                     const DenoiserSchedule& eta, const Eigen::VectorXd& u1, int T,
                     const EngineOptions& opts = {});
// Fixed processing function f. M may be W or a spiked observation Y; law is the
// noise law used for centering.
AmpRun run_ri_amp_mp(std::shared_ptr<const SpectralOperator> M, const SpectralLaw& law, const ScalarFn& f,
                     const DenoiserSchedule& eta, const Eigen::VectorXd& u1, int T,
                     const EngineOptions& opts = {});
// Iteration-dependent processing f_1..f_T; debias rows from MpDebiasSolver.
AmpRun run_ri_amp_mp_schedule(std::shared_ptr<const SpectralOperator> M, const SpectralLaw& law,
                              const std::vector<ScalarFn>& f_schedule, const DenoiserSchedule& eta,
                              const Eigen::VectorXd& u1, int T);
// g[t-1] maps (x_1..x_t) to the next estimate; r holds x_t, u holds g outputs,
// ubar holds xbar_t.
AmpRun run_oamp(std::shared_ptr<const SpectralOperator> W, const std::vector<ScalarFn>& f_schedule,
                const DenoiserSchedule& g, const Eigen::VectorXd& xbar1, int T);

struct UnfoldedRepresentation {
  std::string form;
  int T = 0;
  std::function<Eigen::MatrixXd(double)> poly;  // T x T lower triangular
  std::vector<Eigen::VectorXd> reconstruction;
  std::vector<double> relative_error;
  Eigen::MatrixXd trace_residual;  // (1/N) tr [poly]_{t,j}(M)
  double max_reconstruction_error = 0.0;
  double max_trace_residual = 0.0;
};

UnfoldedRepresentation verify_unfolding(const AmpRun& run);
// Copies the per-t errors of a verification into the run diagnostics.
void attach_unfolding(AmpRun& run, const UnfoldedRepresentation& rep);

// max over t, i of |(1/N) sum_n d ubar_{t+1}[n] / d r_i[n]| recomputed from the
// denoiser partials and the stored divergence matrix.
double ubar_divergence_residual(const AmpRun& run, const DenoiserSchedule& eta);

// max |(1/N) r_s . ubar_t| over all stored pairs.
double orthogonality_residual(const AmpRun& run);

void write_diagnostics_csv(const AmpRun& run, std::ostream& out);

}  // namespace amp_lab

#endif
