#include "amp_lab/amp_engines.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "amp_lab/errors.hpp"

namespace amp_lab {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::GaussianAMP:
      return "gaussian-amp";
    case Variant::FOM:
      return "fom";
    case Variant::RIAMP:
      return "ri-amp";
    case Variant::RIAMPDF:
      return "ri-amp-df";
    case Variant::RIAMPMP:
      return "ri-amp-mp";
    case Variant::OAMP:
      return "oamp";
  }
  return "?";
}

DenoiserOutput apply_denoiser(const Denoiser& eta, const std::vector<Eigen::VectorXd>& history) {
  const int t = static_cast<int>(history.size());
  if (eta.arity() != t) {
    throw ValidationError("denoiser arity " + std::to_string(eta.arity()) + " does not match " +
                          std::to_string(t) + " available iterates");
  }
  const Eigen::Index N = history.front().size();
  DenoiserOutput out;
  out.u.resize(N);
  std::vector<double> row(t);
  std::vector<double> grad(t);
  Eigen::MatrixXd grads(N, t);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (int i = 0; i < t; ++i) row[i] = history[i][n];
    out.u[n] = eta.evaluate(row);
    eta.gradient(row, grad);
    for (int i = 0; i < t; ++i) grads(n, i) = grad[i];
  }
  out.divergences.resize(t);
  for (int i = 0; i < t; ++i) out.divergences[i] = grads.col(i).mean();
  return out;
}

Eigen::VectorXd orthogonal_decompose(const std::vector<Eigen::VectorXd>& history, const Eigen::VectorXd& u_next,
                                     const std::vector<double>& partials) {
  Eigen::VectorXd ubar = u_next;
  for (std::size_t i = 0; i < history.size(); ++i) ubar -= partials[i] * history[i];
  return ubar;
}

Eigen::MatrixXd ri_amp_debias(const std::vector<double>& kappa, const Eigen::MatrixXd& phi) {
  const Eigen::Index t = phi.rows();
  if (static_cast<Eigen::Index>(kappa.size()) < t) {
    throw ValidationError("debias matrix of size " + std::to_string(t) + " needs as many cumulants");
  }
  Eigen::MatrixXd B = kappa[0] * Eigen::MatrixXd::Identity(t, t);
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(t, t);
  for (Eigen::Index i = 1; i < t; ++i) {
    P = P * phi;
    B += kappa[static_cast<std::size_t>(i)] * P;
  }
  return B;
}

MpDebiasSolver::MpDebiasSolver(WeightedAtoms atoms, std::vector<ScalarFn> f_schedule)
    : atoms_(std::move(atoms)), fs_(std::move(f_schedule)) {
  if (atoms_.nodes.empty()) throw ValidationError("debias solver needs a non-empty quadrature");
}

Eigen::VectorXd MpDebiasSolver::next_row(const Eigen::MatrixXd& phi) {
  const int t0 = rows();
  const int t = t0 + 1;
  if (phi.rows() < t) throw ValidationError("divergence block too small for the next debias row");
  if (static_cast<int>(fs_.size()) < t) throw ValidationError("processing schedule shorter than the horizon");
  const Eigen::Index K = static_cast<Eigen::Index>(atoms_.nodes.size());
  const Eigen::Map<const Eigen::VectorXd> w(atoms_.weights.data(), K);

  Eigen::VectorXd F(K);
  for (Eigen::Index n = 0; n < K; ++n) {
    F[n] = fs_[t0](atoms_.nodes[static_cast<std::size_t>(n)]);
    if (!std::isfinite(F[n])) {
      throw DomainError("processing function " + std::to_string(t) + " is undefined at " +
                        std::to_string(atoms_.nodes[static_cast<std::size_t>(n)]));
    }
  }
  F_.push_back(F);

  // (Phi J)_{t0, j} only involves rows l < t0, all fixed already.
  Eigen::MatrixXd PJ = Eigen::MatrixXd::Zero(K, t);
  for (int l = 0; l < t0; ++l) {
    const double p = phi(t0, l);
    if (p != 0.0) PJ.leftCols(l + 1) += p * J_[l];
  }
  PJ_.push_back(PJ);

  // Unit lower-triangular M(k, j) = delta + E[(Phi J)_{k, j}].
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(t, t);
  for (int k = 0; k < t; ++k)
    for (int j = 0; j < k; ++j) M(k, j) += w.dot(PJ_[k].col(j));
  Eigen::VectorXd rhs(t);
  for (int j = 0; j < t; ++j) {
    rhs[j] = w.dot(F.cwiseProduct(PJ.col(j)));
    if (j == t0) rhs[j] += w.dot(F);
  }
  Eigen::VectorXd e(t);
  for (int j = t - 1; j >= 0; --j) {
    double v = rhs[j];
    for (int k = j + 1; k < t; ++k) v -= M(k, j) * e[k];
    e[j] = v;
  }

  Eigen::MatrixXd J(K, t);
  for (int j = 0; j < t; ++j) {
    Eigen::VectorXd col = F.cwiseProduct(PJ.col(j)).array() - e[j];
    if (j == t0) col += F;
    for (int k = j + 1; k < t; ++k) col -= e[k] * PJ_[k].col(j);
    J.col(j) = col;
  }
  J_.push_back(std::move(J));
  rows_.push_back(e);
  return e;
}

Eigen::MatrixXd MpDebiasSolver::E() const {
  const int t = rows();
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(t, t);
  for (int k = 0; k < t; ++k) E.row(k).head(k + 1) = rows_[k].transpose();
  return E;
}

Eigen::MatrixXd ri_amp_mp_debias(const WeightedAtoms& atoms, const std::vector<ScalarFn>& f_schedule,
                                 const Eigen::MatrixXd& phi) {
  MpDebiasSolver solver(atoms, f_schedule);
  for (Eigen::Index t = 1; t <= phi.rows(); ++t) solver.next_row(phi.topLeftCorner(t, t));
  return solver.E();
}

Eigen::MatrixXd lemma_inverse_matrix(const Eigen::VectorXd& fdiag, const Eigen::MatrixXd& E,
                                     const Eigen::MatrixXd& phi) {
  const Eigen::Index t = fdiag.size();
  Eigen::MatrixXd A = -E.topLeftCorner(t, t);
  A.diagonal() += fdiag;
  // J = A + A (Phi J); row k of Phi J uses rows < k of J.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(t, t);
  Eigen::MatrixXd PJ = Eigen::MatrixXd::Zero(t, t);
  for (Eigen::Index k = 0; k < t; ++k) {
    for (Eigen::Index l = 0; l < k; ++l) PJ.row(k) += phi(k, l) * J.row(l);
    J.row(k) = A.row(k) + A.row(k).head(k + 1) * PJ.topRows(k + 1);
  }
  return J;
}

namespace {

void check_common(const SpectralOperator& M, const Eigen::VectorXd& u1, int T, std::size_t schedule) {
  if (T < 1 || T > kDefaultHorizonCap) {
    throw ValidationError("horizon must lie in [1, " + std::to_string(kDefaultHorizonCap) + "]");
  }
  if (u1.size() != M.dim()) throw ValidationError("initialization length does not match the matrix");
  if (!u1.allFinite()) throw ValidationError("initialization must be finite");
  if (schedule < static_cast<std::size_t>(T)) throw ValidationError("denoiser schedule shorter than the horizon");
}

struct LoopHooks {
  std::function<Eigen::VectorXd(int, const AmpRun&)> apply;
  std::function<Eigen::VectorXd(int, const Eigen::MatrixXd&)> debias_row;
  bool onsager_on_ubar = false;
};

void update_orthogonality(AmpRun& run, IterationDiagnostics& d, double prev) {
  const int t = static_cast<int>(run.r.size());
  const double invN = 1.0 / static_cast<double>(run.r.front().size());
  double m = prev;
  for (int j = 0; j <= t; ++j) m = std::max(m, std::abs(run.r[t - 1].dot(run.ubar[j])) * invN);
  for (int s = 0; s + 1 < t; ++s) m = std::max(m, std::abs(run.r[s].dot(run.ubar[t])) * invN);
  d.max_orthogonality_residual = m;
}

void generic_loop(AmpRun& run, const LoopHooks& hooks, const DenoiserSchedule& eta, const Eigen::VectorXd& u1,
                  int T) {
  const double sqrtN = std::sqrt(static_cast<double>(u1.size()));
  run.T = T;
  run.u = {u1};
  run.ubar = {u1};
  run.r.clear();
  run.phi_hat = Eigen::MatrixXd::Zero(T + 1, T + 1);
  run.debias = Eigen::MatrixXd::Zero(T, T);
  double orth = 0.0;
  for (int t = 1; t <= T; ++t) {
    if (!eta[t - 1] || eta[t - 1]->arity() != t) {
      throw ValidationError("denoiser " + std::to_string(t) + " must have arity " + std::to_string(t));
    }
    const Eigen::VectorXd row = hooks.debias_row(t, run.phi_block(t));
    Eigen::VectorXd r = hooks.apply(t, run);
    const auto& basis = hooks.onsager_on_ubar ? run.ubar : run.u;
    for (int i = 0; i < t; ++i) {
      if (row[i] != 0.0) r -= row[i] * basis[i];
    }
    run.debias.row(t - 1).head(t) = row.transpose();
    if (!r.allFinite()) throw DivergenceError("iterate r_" + std::to_string(t) + " is not finite", t);
    run.r.push_back(std::move(r));

    DenoiserOutput out = apply_denoiser(*eta[t - 1], run.r);
    if (!out.u.allFinite()) throw DivergenceError("iterate u_" + std::to_string(t + 1) + " is not finite", t);
    for (int i = 0; i < t; ++i) run.phi_hat(t, i) = out.divergences[i];
    run.ubar.push_back(orthogonal_decompose(run.r, out.u, out.divergences));
    run.u.push_back(std::move(out.u));

    IterationDiagnostics d;
    d.t = t;
    d.norm_r = run.r.back().norm() / sqrtN;
    d.norm_u = run.u.back().norm() / sqrtN;
    update_orthogonality(run, d, orth);
    orth = d.max_orthogonality_residual;
    run.diagnostics.push_back(d);
  }
}

std::vector<double> family_centering(const SpectralLaw& law, PolyKind kind, int T, const EngineOptions& opts,
                                     const ScalarFn& f, PolyFamily& fam) {
  if (opts.centering) {
    if (static_cast<int>(opts.centering->size()) < T) throw ValidationError("centering override too short");
    std::vector<double> c(opts.centering->begin(), opts.centering->begin() + T);
    fam = poly_family_from_centering(kind, c, kind == PolyKind::K ? f : ScalarFn{});
  } else {
    fam = build_poly_family(law, kind, T, kind == PolyKind::K ? f : ScalarFn{});
  }
  return fam.centering;
}

LoopHooks polynomial_hooks(std::vector<double> centering, Eigen::VectorXd values) {
  LoopHooks h;
  auto c = std::make_shared<std::vector<double>>(std::move(centering));
  h.debias_row = [c](int t, const Eigen::MatrixXd& phi) {
    return Eigen::VectorXd(ri_amp_debias(*c, phi).row(t - 1).transpose());
  };
  auto v = std::make_shared<Eigen::VectorXd>(std::move(values));
  h.apply = [v](int t, const AmpRun& run) { return run.matrix->apply_values(*v, run.u[t - 1]); };
  return h;
}

}  // namespace

AmpRun run_gaussian_amp(std::shared_ptr<const SpectralOperator> W, const DenoiserSchedule& eta,
                        const Eigen::VectorXd& u1, int T, const GaussianAmpInit& init) {
  check_common(*W, u1, T, eta.size());
  AmpRun run;
  run.variant = Variant::GaussianAMP;
  run.matrix = W;
  run.T = T;
  run.b1 = init.b1;
  run.u0 = init.u0 ? *init.u0 : Eigen::VectorXd::Zero(u1.size());
  if (run.u0.size() != u1.size()) throw ValidationError("u_0 length does not match u_1");
  run.u = {u1};
  run.ubar = {u1};
  run.phi_hat = Eigen::MatrixXd::Zero(T + 1, T + 1);
  run.debias = Eigen::MatrixXd::Zero(T, T);
  const double sqrtN = std::sqrt(static_cast<double>(u1.size()));
  double orth = 0.0;
  for (int t = 1; t <= T; ++t) {
    if (!eta[t - 1] || eta[t - 1]->arity() != 1) throw ValidationError("Gaussian AMP denoisers take one argument");
    Eigen::VectorXd r = W->apply(run.u[t - 1]);
    if (t == 1) {
      r -= run.b1 * run.u0;
    } else {
      const double b = run.phi_hat(t - 1, t - 2);
      r -= b * run.u[t - 2];
      run.debias(t - 1, t - 2) = b;
    }
    if (!r.allFinite()) throw DivergenceError("iterate r_" + std::to_string(t) + " is not finite", t);
    run.r.push_back(std::move(r));
    DenoiserOutput out = apply_denoiser(*eta[t - 1], {run.r.back()});
    if (!out.u.allFinite()) throw DivergenceError("iterate u_" + std::to_string(t + 1) + " is not finite", t);
    run.phi_hat(t, t - 1) = out.divergences[0];
    run.ubar.push_back(out.u - out.divergences[0] * run.r.back());
    run.u.push_back(std::move(out.u));
    IterationDiagnostics d;
    d.t = t;
    d.norm_r = run.r.back().norm() / sqrtN;
    d.norm_u = run.u.back().norm() / sqrtN;
    update_orthogonality(run, d, orth);
    orth = d.max_orthogonality_residual;
    run.diagnostics.push_back(d);
  }
  return run;
}

AmpRun run_fom(std::shared_ptr<const SpectralOperator> W, const Eigen::MatrixXd& B, const DenoiserSchedule& eta,
               const Eigen::VectorXd& u1, int T) {
  check_common(*W, u1, T, eta.size());
  if (B.rows() < T || B.cols() < T) throw ValidationError("FOM coefficient matrix smaller than the horizon");
  for (int i = 0; i < T; ++i)
    for (int j = i + 1; j < T; ++j)
      if (B(i, j) != 0.0) throw ValidationError("FOM coefficient matrix must be lower triangular");
  AmpRun run;
  run.variant = Variant::FOM;
  run.matrix = W;
  LoopHooks h;
  const Eigen::MatrixXd Bc = B.topLeftCorner(T, T);
  h.debias_row = [Bc](int t, const Eigen::MatrixXd&) { return Eigen::VectorXd(Bc.row(t - 1).head(t).transpose()); };
  h.apply = [](int t, const AmpRun& r) { return r.matrix->apply(r.u[t - 1]); };
  generic_loop(run, h, eta, u1, T);
  return run;
}

AmpRun run_ri_amp(std::shared_ptr<const SpectralOperator> W, const SpectralLaw& law, const DenoiserSchedule& eta,
                  const Eigen::VectorXd& u1, int T, const EngineOptions& opts) {
  check_common(*W, u1, T, eta.size());
  AmpRun run;
  run.variant = Variant::RIAMP;
  run.matrix = W;
  PolyFamily fam;
  auto kappa = family_centering(law, PolyKind::Q, T, opts, {}, fam);
  run.family = fam;
  generic_loop(run, polynomial_hooks(std::move(kappa), W->eigenvalues()), eta, u1, T);
  return run;
}

AmpRun run_ri_amp_df(std::shared_ptr<const SpectralOperator> W, const SpectralLaw& law,
                     const DenoiserSchedule& eta, const Eigen::VectorXd& u1, int T, const EngineOptions& opts) {
  check_common(*W, u1, T, eta.size());
  AmpRun run;
  run.variant = Variant::RIAMPDF;
  run.matrix = W;
  PolyFamily fam;
  auto gamma = family_centering(law, PolyKind::H, T, opts, {}, fam);
  run.family = fam;
  LoopHooks h = polynomial_hooks(std::move(gamma), W->eigenvalues());
  h.onsager_on_ubar = true;
  generic_loop(run, h, eta, u1, T);
  return run;
}

AmpRun run_ri_amp_mp(std::shared_ptr<const SpectralOperator> M, const SpectralLaw& law, const ScalarFn& f,
                     const DenoiserSchedule& eta, const Eigen::VectorXd& u1, int T, const EngineOptions& opts) {
  check_common(*M, u1, T, eta.size());
  if (!f) throw ValidationError("RI-AMP-MP needs a processing function");
  AmpRun run;
  run.variant = Variant::RIAMPMP;
  run.matrix = M;
  PolyFamily fam;
  auto alpha = family_centering(law, PolyKind::K, T, opts, f, fam);
  run.family = fam;
  generic_loop(run, polynomial_hooks(std::move(alpha), M->spectrum_values(f)), eta, u1, T);
  return run;
}

AmpRun run_ri_amp_mp_schedule(std::shared_ptr<const SpectralOperator> M, const SpectralLaw& law,
                              const std::vector<ScalarFn>& f_schedule, const DenoiserSchedule& eta,
                              const Eigen::VectorXd& u1, int T) {
  check_common(*M, u1, T, eta.size());
  if (static_cast<int>(f_schedule.size()) < T) throw ValidationError("processing schedule shorter than the horizon");
  AmpRun run;
  run.variant = Variant::RIAMPMP;
  run.matrix = M;
  run.f_schedule.assign(f_schedule.begin(), f_schedule.begin() + T);
  auto values = std::make_shared<std::vector<Eigen::VectorXd>>();
  for (int t = 0; t < T; ++t) values->push_back(M->spectrum_values(f_schedule[t]));
  auto solver = std::make_shared<MpDebiasSolver>(quadrature_rule(law), run.f_schedule);
  LoopHooks h;
  h.debias_row = [solver](int, const Eigen::MatrixXd& phi) { return solver->next_row(phi); };
  h.apply = [values](int t, const AmpRun& r) { return r.matrix->apply_values((*values)[t - 1], r.u[t - 1]); };
  generic_loop(run, h, eta, u1, T);
  return run;
}

AmpRun run_oamp(std::shared_ptr<const SpectralOperator> W, const std::vector<ScalarFn>& f_schedule,
                const DenoiserSchedule& g, const Eigen::VectorXd& xbar1, int T) {
  check_common(*W, xbar1, T, g.size());
  if (static_cast<int>(f_schedule.size()) < T) throw ValidationError("matrix denoiser schedule shorter than the horizon");
  AmpRun run;
  run.variant = Variant::OAMP;
  run.matrix = W;
  run.f_schedule.assign(f_schedule.begin(), f_schedule.begin() + T);
  auto values = std::make_shared<std::vector<Eigen::VectorXd>>();
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd v = W->spectrum_values(f_schedule[t]);
    v.array() -= v.mean();
    values->push_back(std::move(v));
  }
  LoopHooks h;
  h.debias_row = [](int t, const Eigen::MatrixXd&) { return Eigen::VectorXd(Eigen::VectorXd::Zero(t)); };
  h.apply = [values](int t, const AmpRun& r) { return r.matrix->apply_values((*values)[t - 1], r.ubar[t - 1]); };
  generic_loop(run, h, g, xbar1, T);
  return run;
}

UnfoldedRepresentation verify_unfolding(const AmpRun& run) {
  if (run.variant == Variant::GaussianAMP) {
    throw UnsupportedVariant("Gaussian AMP has no polynomial unfolding in this library");
  }
  const int T = run.T;
  const Eigen::MatrixXd phi = run.phi_block(T);
  UnfoldedRepresentation rep;
  rep.T = T;

  if (run.family && run.f_schedule.empty()) {
    const PolyFamily fam = *run.family;
    std::vector<Eigen::MatrixXd> powers{Eigen::MatrixXd::Identity(T, T)};
    for (int i = 1; i < T; ++i) powers.push_back(powers.back() * phi);
    rep.form = fam.kind == PolyKind::Q ? "P" : (fam.kind == PolyKind::H ? "G" : "J");
    rep.poly = [fam, powers, T](double lambda) {
      const std::vector<double> m = fam.evaluate_all(lambda);
      Eigen::MatrixXd P = Eigen::MatrixXd::Zero(T, T);
      for (int i = 1; i <= T; ++i) P += m[i] * powers[i - 1];
      return P;
    };
  } else if (run.variant == Variant::OAMP) {
    std::vector<double> tr;
    for (const auto& f : run.f_schedule) tr.push_back(run.matrix->spectrum_values(f).mean());
    const auto fs = run.f_schedule;
    rep.form = "OAMP";
    rep.poly = [fs, tr, T](double lambda) {
      Eigen::MatrixXd P = Eigen::MatrixXd::Zero(T, T);
      for (int t = 0; t < T; ++t) P(t, t) = fs[t](lambda) - tr[t];
      return P;
    };
  } else {
    const Eigen::MatrixXd E = run.debias;
    const auto fs = run.f_schedule;
    rep.form = run.variant == Variant::FOM ? "P-general" : "J-general";
    rep.poly = [E, phi, fs, T](double lambda) {
      Eigen::VectorXd fd(T);
      for (int t = 0; t < T; ++t) fd[t] = fs.empty() ? lambda : fs[t](lambda);
      return lemma_inverse_matrix(fd, E, phi);
    };
  }

  const SpectralOperator& M = *run.matrix;
  const Eigen::Index N = M.dim();
  std::vector<Eigen::VectorXd> coeff;
  for (int j = 0; j < T; ++j) coeff.push_back(M.to_eigenbasis(run.ubar[j]));
  std::vector<Eigen::VectorXd> rec(T, Eigen::VectorXd::Zero(N));
  rep.trace_residual = Eigen::MatrixXd::Zero(T, T);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Eigen::MatrixXd P = rep.poly(M.eigenvalues()[n]);
    rep.trace_residual += P;
    for (int t = 0; t < T; ++t) {
      double s = 0.0;
      for (int j = 0; j <= t; ++j) s += P(t, j) * coeff[j][n];
      rec[t][n] = s;
    }
  }
  rep.trace_residual /= static_cast<double>(N);
  for (int t = 0; t < T; ++t) {
    rep.reconstruction.push_back(M.from_eigenbasis(rec[t]));
    const double denom = std::max(run.r[t].norm(), std::numeric_limits<double>::min());
    rep.relative_error.push_back((rep.reconstruction.back() - run.r[t]).norm() / denom);
    rep.max_reconstruction_error = std::max(rep.max_reconstruction_error, rep.relative_error.back());
  }
  rep.max_trace_residual = rep.trace_residual.cwiseAbs().maxCoeff();
  return rep;
}

void attach_unfolding(AmpRun& run, const UnfoldedRepresentation& rep) {
  for (int t = 0; t < run.T && t < static_cast<int>(run.diagnostics.size()); ++t) {
    run.diagnostics[t].reconstruction_error = rep.relative_error[t];
    run.diagnostics[t].max_trace_residual = rep.trace_residual.row(t).head(t + 1).cwiseAbs().maxCoeff();
  }
}

double ubar_divergence_residual(const AmpRun& run, const DenoiserSchedule& eta) {
  double worst = 0.0;
  for (int t = 1; t <= run.T; ++t) {
    const bool single = run.variant == Variant::GaussianAMP;
    std::vector<Eigen::VectorXd> hist;
    if (single) {
      hist = {run.r[t - 1]};
    } else {
      hist.assign(run.r.begin(), run.r.begin() + t);
    }
    const int a = static_cast<int>(hist.size());
    const Eigen::Index N = hist.front().size();
    std::vector<double> row(a);
    std::vector<double> grad(a);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(a);
    for (Eigen::Index n = 0; n < N; ++n) {
      for (int i = 0; i < a; ++i) row[i] = hist[i][n];
      eta[t - 1]->gradient(row, grad);
      for (int i = 0; i < a; ++i) {
        const double phi = single ? run.phi_hat(t, t - 1) : run.phi_hat(t, i);
        acc[i] += grad[i] - phi;
      }
    }
    worst = std::max(worst, (acc / static_cast<double>(N)).cwiseAbs().maxCoeff());
  }
  return worst;
}

double orthogonality_residual(const AmpRun& run) {
  double m = 0.0;
  const double invN = 1.0 / static_cast<double>(run.r.front().size());
  for (const auto& r : run.r)
    for (const auto& ub : run.ubar) m = std::max(m, std::abs(r.dot(ub)) * invN);
  return m;
}

void write_diagnostics_csv(const AmpRun& run, std::ostream& out) {
  out << "t,norm_r,norm_u,max_trace_residual,max_orthogonality_residual,reconstruction_error\n";
  out.precision(12);
  for (const auto& d : run.diagnostics) {
    out << d.t << ',' << d.norm_r << ',' << d.norm_u << ',' << d.max_trace_residual << ','
        << d.max_orthogonality_residual << ',' << d.reconstruction_error << '\n';
  }
}

}  // namespace amp_lab
