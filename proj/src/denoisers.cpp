#include "amp_lab/denoisers.hpp"

#include <cmath>
#include <random>

#include "amp_lab/errors.hpp"

namespace amp_lab {

void Denoiser::gradient(std::span<const double> r, std::span<double> out, std::span<const double> side) const {
  for (int i = 0; i < arity(); ++i) out[i] = finite_difference_partial(*this, r, i, side);
}

double finite_difference_partial(const Denoiser& d, std::span<const double> r, int i,
                                 std::span<const double> side) {
  std::vector<double> x(r.begin(), r.end());
  const double h = 1e-5 * (1.0 + std::abs(r[i]));
  x[i] = r[i] + h;
  const double fp = d.evaluate(x, side);
  x[i] = r[i] - h;
  const double fm = d.evaluate(x, side);
  return (fp - fm) / (2.0 * h);
}

namespace {

void check_arity(int arity) {
  if (arity < 1) throw ValidationError("denoiser arity must be positive");
}

class LastTanh final : public Denoiser {
 public:
  LastTanh(int arity, double scale) : arity_(arity), scale_(scale) {}
  int arity() const override { return arity_; }
  double evaluate(std::span<const double> r, std::span<const double>) const override {
    return std::tanh(scale_ * r[arity_ - 1]);
  }
  bool has_analytic_partials() const override { return true; }
  void gradient(std::span<const double> r, std::span<double> out, std::span<const double>) const override {
    for (int i = 0; i + 1 < arity_; ++i) out[i] = 0.0;
    const double th = std::tanh(scale_ * r[arity_ - 1]);
    out[arity_ - 1] = scale_ * (1.0 - th * th);
  }
  double lipschitz_bound() const override { return std::abs(scale_); }
  std::string name() const override { return "tanh"; }

 private:
  int arity_;
  double scale_;
};

class Linear final : public Denoiser {
 public:
  Linear(std::vector<double> c, double offset) : c_(std::move(c)), offset_(offset) {}
  int arity() const override { return static_cast<int>(c_.size()); }
  double evaluate(std::span<const double> r, std::span<const double>) const override {
    double s = offset_;
    for (std::size_t i = 0; i < c_.size(); ++i) s += c_[i] * r[i];
    return s;
  }
  bool has_analytic_partials() const override { return true; }
  void gradient(std::span<const double>, std::span<double> out, std::span<const double>) const override {
    for (std::size_t i = 0; i < c_.size(); ++i) out[i] = c_[i];
  }
  double lipschitz_bound() const override {
    double s = 0.0;
    for (double v : c_) s += std::abs(v);
    return s;
  }
  std::string name() const override { return "linear"; }

 private:
  std::vector<double> c_;
  double offset_;
};

class RandomLipschitz final : public Denoiser {
 public:
  RandomLipschitz(int arity, std::uint64_t seed) : arity_(arity) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd;
    for (int i = 0; i < arity; ++i) {
      a_.push_back(u(rng) - 0.5);
      b_.push_back(0.5 + u(rng));
      c_.push_back(6.283185307179586 * u(rng));
      d_.push_back(u(rng) - 0.5);
      w_.push_back(nd(rng) / std::sqrt(static_cast<double>(arity)));
    }
    e_ = 0.5 + 0.5 * u(rng);
  }
  int arity() const override { return arity_; }
  double evaluate(std::span<const double> r, std::span<const double>) const override {
    double s = 0.0;
    double z = 0.0;
    for (int i = 0; i < arity_; ++i) {
      s += a_[i] * std::sin(b_[i] * r[i] + c_[i]) + d_[i] * r[i];
      z += w_[i] * r[i];
    }
    return s + e_ * std::tanh(z);
  }
  bool has_analytic_partials() const override { return true; }
  void gradient(std::span<const double> r, std::span<double> out, std::span<const double>) const override {
    double z = 0.0;
    for (int i = 0; i < arity_; ++i) z += w_[i] * r[i];
    const double th = std::tanh(z);
    const double sech2 = 1.0 - th * th;
    for (int i = 0; i < arity_; ++i) {
      out[i] = a_[i] * b_[i] * std::cos(b_[i] * r[i] + c_[i]) + d_[i] + e_ * sech2 * w_[i];
    }
  }
  double lipschitz_bound() const override {
    double s = 0.0;
    double wn = 0.0;
    for (int i = 0; i < arity_; ++i) {
      s += std::abs(a_[i] * b_[i]) + std::abs(d_[i]);
      wn += std::abs(w_[i]);
    }
    return s + e_ * wn;
  }
  std::string name() const override { return "random-lipschitz"; }

 private:
  int arity_;
  std::vector<double> a_, b_, c_, d_, w_;
  double e_ = 0.0;
};

class CombinedMmse final : public Denoiser {
 public:
  CombinedMmse(std::vector<double> w, double s, Prior prior) : w_(std::move(w)), s_(s), prior_(std::move(prior)) {}
  int arity() const override { return static_cast<int>(w_.size()); }
  double evaluate(std::span<const double> r, std::span<const double>) const override {
    return prior_.mmse(combine(r), s_);
  }
  bool has_analytic_partials() const override { return true; }
  void gradient(std::span<const double> r, std::span<double> out, std::span<const double>) const override {
    const double g = prior_.mmse_derivative(combine(r), s_);
    for (std::size_t i = 0; i < w_.size(); ++i) out[i] = w_[i] * g;
  }
  double lipschitz_bound() const override {
    double wn = 0.0;
    for (double v : w_) wn += std::abs(v);
    double slope = 1.0 / s_;
    if (prior_.kind() == PriorKind::Gaussian) slope = 1.0 / (1.0 + s_);
    if (prior_.kind() == PriorKind::SparseThreePoint) slope = 1.0 / (prior_.sparsity() * s_);
    return wn * slope;
  }
  std::string name() const override { return "mmse-" + prior_.name(); }

 private:
  double combine(std::span<const double> r) const {
    double y = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) y += w_[i] * r[i];
    return y;
  }
  std::vector<double> w_;
  double s_;
  Prior prior_;
};

class FunctionDenoiser final : public Denoiser {
 public:
  FunctionDenoiser(int arity, DenoiserFn f, double lip, std::string name, DenoiserGradFn g)
      : arity_(arity), f_(std::move(f)), g_(std::move(g)), lip_(lip), name_(std::move(name)) {}
  int arity() const override { return arity_; }
  double evaluate(std::span<const double> r, std::span<const double>) const override { return f_(r); }
  bool has_analytic_partials() const override { return static_cast<bool>(g_); }
  void gradient(std::span<const double> r, std::span<double> out, std::span<const double> side) const override {
    if (g_) {
      g_(r, out);
    } else {
      Denoiser::gradient(r, out, side);
    }
  }
  double lipschitz_bound() const override { return lip_; }
  std::string name() const override { return name_; }

 private:
  int arity_;
  DenoiserFn f_;
  DenoiserGradFn g_;
  double lip_;
  std::string name_;
};

}  // namespace

DenoiserPtr make_last_tanh(int arity, double scale) {
  check_arity(arity);
  return std::make_shared<LastTanh>(arity, scale);
}

DenoiserPtr make_linear(std::vector<double> coeffs, double offset) {
  check_arity(static_cast<int>(coeffs.size()));
  return std::make_shared<Linear>(std::move(coeffs), offset);
}

DenoiserPtr make_identity(int arity) {
  check_arity(arity);
  std::vector<double> c(arity, 0.0);
  c.back() = 1.0;
  return std::make_shared<Linear>(std::move(c), 0.0);
}

DenoiserPtr make_constant(int arity, double value) {
  check_arity(arity);
  return std::make_shared<Linear>(std::vector<double>(arity, 0.0), value);
}

DenoiserPtr make_random_lipschitz(int arity, std::uint64_t seed) {
  check_arity(arity);
  return std::make_shared<RandomLipschitz>(arity, seed);
}

DenoiserPtr make_combined_mmse(std::vector<double> weights, double noise_var, Prior prior) {
  check_arity(static_cast<int>(weights.size()));
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) {
    throw ValidationError("combined MMSE denoiser needs a positive finite noise variance");
  }
  return std::make_shared<CombinedMmse>(std::move(weights), noise_var, std::move(prior));
}

DenoiserPtr make_function_denoiser(int arity, DenoiserFn f, double lipschitz, std::string name,
                                   DenoiserGradFn grad) {
  check_arity(arity);
  if (!f) throw ValidationError("function denoiser needs a callable");
  return std::make_shared<FunctionDenoiser>(arity, std::move(f), lipschitz, std::move(name), std::move(grad));
}

DenoiserSchedule last_tanh_schedule(int T, double scale) {
  DenoiserSchedule s;
  for (int t = 1; t <= T; ++t) s.push_back(make_last_tanh(t, scale));
  return s;
}

DenoiserSchedule random_lipschitz_schedule(int T, std::uint64_t seed) {
  DenoiserSchedule s;
  for (int t = 1; t <= T; ++t) s.push_back(make_random_lipschitz(t, seed * 1000003ULL + static_cast<std::uint64_t>(t)));
  return s;
}

}  // namespace amp_lab
