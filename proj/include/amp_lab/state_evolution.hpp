#ifndef AMP_LAB_STATE_EVOLUTION_HPP
#define AMP_LAB_STATE_EVOLUTION_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "amp_lab/amp_engines.hpp"
#include "amp_lab/denoisers.hpp"
#include "amp_lab/free_probability.hpp"
#include "amp_lab/random_matrix.hpp"
#include "amp_lab/spectral_law.hpp"

namespace amp_lab {

// Nodes and weights for E[h(G)], G ~ N(0, 1).
struct GaussianRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
// Golub-Welsch rule: exact for polynomials of degree below 2n.
GaussianRule gauss_hermite(int n);
// Equispaced nodes on [-L, L] with L = sqrt(2 ln 1e17), weights h * phi(x)
// renormalized to sum to one. Converges geometrically for integrands analytic in
// a strip, with a rate set by the strip width rather than by polynomial degree,
// which makes it far more accurate than Gauss-Hermite for tanh-type denoisers.
GaussianRule gauss_trapezoid(int n);

// GaussHermite and Trapezoid are tensor rules, limited to three dimensions.
// Auto uses the trapezoid rule up to three dimensions and Monte Carlo beyond.
enum class ExpectationMethod { MonteCarlo, GaussHermite, Trapezoid, Auto };

struct ExpectationConfig {
  ExpectationMethod method = ExpectationMethod::MonteCarlo;
  std::size_t samples = 2'000'000;
  std::uint64_t seed = 0x5eed5eedULL;
  int shards = 16;
  int points = 80;   // nodes per dimension of the tensor rules
  int threads = 1;
};

// (X*, R_1..R_t) with R = beta X* + Z, Z ~ N(0, S) independent of X*.
// Without a prior X* is absent (treated as zero).
struct GaussianModel {
  Eigen::MatrixXd S;
  Eigen::VectorXd beta;
  std::optional<Prior> prior;
};

// What is needed to regenerate U_2..U_t and their divergence-free parts on
// fresh samples: the earlier denoisers and the population divergences.
// U_1 = a X* + b N' with N' standard normal independent of everything.
struct SeHistory {
  DenoiserSchedule eta;  // eta[j] produces U_{j+2}
  Eigen::MatrixXd Phi;   // t x t, row j = E[d eta_{j+1}]
  double init_signal = 0.0;
  double init_noise = 1.0;
};

// Moments of U_{t+1} = eta(R_1..R_t) and of its divergence-free part.
struct StepMoments {
  Eigen::VectorXd divergence;         // E[d_i eta], i = 1..t
  Eigen::VectorXd divergence_stderr;
  Eigen::VectorXd ubar_cross;         // E[Ubar_{t+1} Ubar_j], j = 1..t+1
  Eigen::VectorXd u_cross;            // E[U_{t+1} U_j], j = 1..t+1
  double alpha = 0.0;                 // E[X* Ubar_{t+1}]
  double overlap = 0.0;               // E[X* U_{t+1}]
  double mse = 0.0;                   // E[(U_{t+1} - X*)^2]
  double mse_stderr = 0.0;
  std::size_t evaluations = 0;
};

StepMoments gaussian_expectations(const Denoiser& eta, const GaussianModel& model, const SeHistory& hist,
                                  const ExpectationConfig& cfg);

struct SeState {
  int t = 0;
  Eigen::MatrixXd Sigma;     // covariance of the Gaussian part of (R_1..R_t)
  Eigen::MatrixXd Phi;       // t x t
  Eigen::MatrixXd DeltaBar;  // t x t
  Eigen::MatrixXd Delta;     // t x t, computed directly as E[U_i U_j]
  Eigen::VectorXd alpha;     // E[X* Ubar_i]
  Eigen::VectorXd beta;      // spiked only
  Eigen::MatrixXd Sigma1;
  Eigen::MatrixXd Sigma2;
  // Statistics of the estimate U_{t+1} produced from (R_1..R_t).
  double mse = 0.0;
  double mse_stderr = 0.0;
  double overlap = 0.0;
};

using DenoiserFactory = std::function<DenoiserPtr(int t, const SeState& state)>;
DenoiserFactory fixed_schedule(DenoiserSchedule eta);
// Precision-weighted combination of R_1..R_t built from (beta_t, Sigma_t),
// followed by the scalar MMSE denoiser of the prior. A vanishing signal gives
// the zero estimate.
DenoiserFactory mmse_combining(Prior prior);

enum class SeForm { RIAMP, RIAMPDF, RIAMPMP, OAMP };

struct NuMeasure {
  WeightedAtoms atoms;  // full measure (continuous part plus outlier atom)
  std::optional<double> outlier;
  double outlier_weight = 0.0;
  bool analytic = true;
  double total_mass() const { return atoms.total_mass(); }
  double moment(int n) const;
};

struct SeProblem {
  SeForm form = SeForm::RIAMP;
  SpectralLaw law = SpectralLaw::semicircle();
  // Overrides the family built from the law (Q, H or K according to form).
  std::optional<PolyFamily> family;
  ScalarFn f;                       // RI-AMP-MP with a fixed processing function
  std::vector<ScalarFn> f_schedule; // RI-AMP-MP schedule or OAMP matrix denoisers
  std::optional<Prior> prior;       // spiked model signal prior
  std::optional<NuMeasure> nu;      // spiked model overlap measure
  double init_signal = 0.0;
  double init_noise = 1.0;
  DenoiserFactory denoisers;
  int T = 1;
  ExpectationConfig expectation;
  int quadrature_panels = 24;
};

struct SeTrajectory {
  std::vector<SeState> states;  // states[t-1] describes (R_1..R_t)
  DenoiserSchedule denoisers;   // the denoisers chosen along the way
  bool spiked = false;
};

SeTrajectory run_state_evolution(const SeProblem& p);

SeTrajectory ri_amp_se(const SpectralLaw& law, DenoiserFactory eta, double init_second_moment, int T,
                       const ExpectationConfig& cfg = {});
SeTrajectory ri_amp_df_se(const SpectralLaw& law, DenoiserFactory eta, double init_second_moment, int T,
                          const ExpectationConfig& cfg = {});
SeTrajectory oamp_se(const SpectralLaw& law, std::vector<ScalarFn> f_schedule, DenoiserFactory g,
                     double init_second_moment, int T, const ExpectationConfig& cfg = {});
// Signal-plus-noise recursion for RI-AMP-MP on Y = (theta/N) x x^T + W. Pass a
// fixed f or a schedule; nu defaults to the analytic measure of the law.
SeTrajectory spiked_se(const SpectralLaw& law, double theta, ScalarFn f, std::vector<ScalarFn> f_schedule,
                       DenoiserFactory eta, const Prior& prior, double omega, int T,
                       const ExpectationConfig& cfg = {}, std::optional<NuMeasure> nu = std::nullopt);

// Covariance of (R_1..R_t) written as a cumulant series; kappa needs 2t entries.
Eigen::MatrixXd fan_se_form(const std::vector<double>& kappa, const Eigen::MatrixXd& Phi,
                            const Eigen::MatrixXd& Delta);
// E_mu[P(L) DeltaBar P(L)^T] with P = sum_i Q_i Phi^{i-1} over a weighted rule.
Eigen::MatrixXd theorem_se_form(const PolyFamily& family, const WeightedAtoms& rule, const Eigen::MatrixXd& Phi,
                                const Eigen::MatrixXd& DeltaBar);
Eigen::MatrixXd delta_from_relation(const Eigen::MatrixXd& DeltaBar, const Eigen::MatrixXd& Phi,
                                    const Eigen::MatrixXd& Sigma);

// tau_1^2 = E[U_1^2], tau_{t+1}^2 = E[eta_{t+1}(tau_t G)^2] for arity-1 denoisers;
// returns tau_1^2..tau_T^2. Expectations use the trapezoid rule.
std::vector<double> gaussian_amp_tau_recursion(const DenoiserSchedule& eta, double init_second_moment, int T,
                                               int points = 120);

NuMeasure nu_measure_analytic(const SpectralLaw& law, double theta, int panels = 24);
NuMeasure nu_measure_empirical(const std::vector<OverlapMeasure>& samples);

void write_se_csv(const SeTrajectory& traj, std::ostream& out);

}  // namespace amp_lab

#endif
