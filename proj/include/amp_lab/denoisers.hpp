#ifndef AMP_LAB_DENOISERS_HPP
#define AMP_LAB_DENOISERS_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "amp_lab/random_matrix.hpp"

namespace amp_lab {

// Rowwise-separable map (r_1[n], ..., r_t[n]; a[n]) -> u[n].
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual int arity() const = 0;
  virtual double evaluate(std::span<const double> r, std::span<const double> side = {}) const = 0;
  virtual bool has_analytic_partials() const { return false; }
  // Writes d/dr_i for i < arity. The default uses central differences.
  virtual void gradient(std::span<const double> r, std::span<double> out,
                        std::span<const double> side = {}) const;
  virtual double lipschitz_bound() const = 0;
  virtual std::string name() const = 0;
};

using DenoiserPtr = std::shared_ptr<const Denoiser>;
// Entry t-1 produces u_{t+1} from (r_1, ..., r_t) and must have arity t, except
// for Gaussian AMP where every entry has arity 1.
using DenoiserSchedule = std::vector<DenoiserPtr>;

// Central difference with step 1e-5 (1 + |r_i|).
double finite_difference_partial(const Denoiser& d, std::span<const double> r, int i,
                                 std::span<const double> side = {});

// tanh(scale * r_t), ignoring earlier iterates.
DenoiserPtr make_last_tanh(int arity, double scale = 1.0);
// sum_i coeffs[i] r_i + offset.
DenoiserPtr make_linear(std::vector<double> coeffs, double offset = 0.0);
// r_t itself.
DenoiserPtr make_identity(int arity);
DenoiserPtr make_constant(int arity, double value);
// Smooth bounded-slope map with random coefficients drawn from the seed:
// sum_i (a_i sin(b_i r_i + c_i) + d_i r_i) + e tanh(w . r).
DenoiserPtr make_random_lipschitz(int arity, std::uint64_t seed);
// Scalar MMSE denoiser applied to the combined observation y = w . r with
// effective noise variance s.
DenoiserPtr make_combined_mmse(std::vector<double> weights, double noise_var, Prior prior);

using DenoiserFn = std::function<double(std::span<const double>)>;
using DenoiserGradFn = std::function<void(std::span<const double>, std::span<double>)>;
// Wraps arbitrary callables. Without a gradient callable, partials fall back to
// finite differences.
DenoiserPtr make_function_denoiser(int arity, DenoiserFn f, double lipschitz, std::string name,
                                   DenoiserGradFn grad = {});

DenoiserSchedule last_tanh_schedule(int T, double scale = 1.0);
DenoiserSchedule random_lipschitz_schedule(int T, std::uint64_t seed);

}  // namespace amp_lab

#endif
