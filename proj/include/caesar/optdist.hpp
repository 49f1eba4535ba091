#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "caesar/coarse.hpp"
#include "caesar/mdp.hpp"
#include "caesar/sampler.hpp"

namespace caesar {

/// Input to the minimax sampling-distribution problem: one visitation table
/// per target policy (coarse and thresholded in the pipeline, exact in
/// oracle-side tests) plus the union-of-supports mask.
struct SamplingObjective {
  std::vector<VisitationTable> tables;           // K tables, same shape
  std::vector<std::vector<std::uint8_t>> support;  // [H] flat [S*A], union of supports
  int horizon = 0, num_states = 0, num_actions = 0;

  int num_policies() const { return static_cast<int>(tables.size()); }
  static SamplingObjective from_tables(std::vector<VisitationTable> tables);
};

struct SamplingSolution {
  MixtureWeights alpha;                   // one mixture shared by all steps
  VisitationTable mu_hat;                 // sum_k alpha_k * table_k, per step
  std::vector<double> objective_per_step;  // max_k sum (d_k^2 / mu) at each h
  double objective_total = 0.0;
  int iterations = 0;
  bool converged = false;
  double certificate_gap = 0.0;  // best objective minus best lower bound found
};

struct SolveOptions {
  double tol = 1e-6;
  int max_iters = 20000;
  double alpha_floor_scale = 1e-6;  // floor = scale / K
  int improvement_window = 50;
};

struct SolverNonConvergence : std::runtime_error {
  SolverNonConvergence(SamplingSolution best_, double gap_)
      : std::runtime_error("sampling-distribution solver did not converge; gap " +
                           std::to_string(gap_)),
        best(std::move(best_)),
        gap(gap_) {}
  SamplingSolution best;
  double gap;
};

/// Step-h objective max_k sum_{s,a} d_k(s,a)^2 / mu(s,a) with mu the
/// alpha-mixture; 0/0 counts as 0 and an uncovered positive entry gives +inf.
double objective_value(const SamplingObjective& obj, const MixtureWeights& alpha, int h);

/// Objective summed over steps.
double objective_total(const SamplingObjective& obj, const MixtureWeights& alpha);

/// Minimize F(alpha) = sum_h max_k sum (d_k^2 / mu_alpha) on the simplex by
/// exponentiated subgradient steps with an alpha floor. Throws
/// SolverNonConvergence (carrying the best iterate) when neither the
/// improvement window nor the lower-bound certificate closes within max_iters.
SamplingSolution solve_alpha(const SamplingObjective& obj, const SolveOptions& opts = {});

/// Same solver restricted to a single step's objective; used for diagnostics
/// and for per-step bounds over enumerated policy sets.
SamplingSolution solve_alpha_per_step(const SamplingObjective& obj, int h,
                                      const SolveOptions& opts = {});

/// Mixture of exact visitation tables: the distribution trajectories are
/// actually sampled from once alpha is fixed.
VisitationTable realized_mixture(std::span<const VisitationTable> oracle_tables,
                                 const MixtureWeights& alpha);

/// Realized mixture under the analysis convention that a policy's true mass
/// is treated as 0 wherever its coarse estimate was zeroed.
VisitationTable realized_mixture_on_support(std::span<const VisitationTable> oracle_tables,
                                            const MixtureWeights& alpha,
                                            std::span<const CoarseVisitation> coarse);

}  // namespace caesar
