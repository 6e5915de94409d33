#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cafct/rng.hpp"
#include "cafct/tensor.hpp"

namespace cafct {

// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) per element,
// evaluated on an in-place-perturbed clone. f must be deterministic.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps = 1e-5);

// |a-b| / max(|a|,|b|,1e-8)
double relative_error(double a, double b);

// Compares backward gradients against central differences for every tensor in
// `wiggle` (leaf tensors that loss_fn reads; they are perturbed in place).
// loss_fn must rebuild the computation and return the scalar loss.
// sample_cap > 0 probes at most that many elements per tensor (deterministic
// draws from rng); 0 probes exhaustively. corrupt injects an error into the
// first gradient (negative-control fixture). Returns the worst relative
// error seen.
// denom_floor widens the relative-error denominator beyond the default 1e-8;
// deep composites need it because central-difference noise scales with the
// loss magnitude while true gradients can be arbitrarily small.
double check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> wiggle,
                       Rng& rng, double eps = 1e-5, int sample_cap = 0, bool corrupt = false,
                       double denom_floor = 1e-8);

struct GradCheckResult {
  std::string suite;
  double worst = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Runs the registered finite-difference suites for one module scope or for
// "all". Unknown scopes throw. corrupt feeds the negative-control fixture to
// the first suite executed.
std::vector<GradCheckResult> run_grad_check(const std::string& scope, uint64_t seed,
                                            bool corrupt = false);

const std::vector<std::string>& grad_check_scopes();

// Uniform [lo, hi) leaf tensor; handy for tests as well as the suites.
Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                   bool requires_grad = true);
Tensor rand_binary(Shape shape, Rng& rng, double p_one = 0.5);

}  // namespace cafct
