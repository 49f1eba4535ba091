#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "caesar/coarse.hpp"
#include "caesar/mdp.hpp"
#include "caesar/optdist.hpp"
#include "caesar/sampler.hpp"

namespace caesar {

/// Per-step weight tables w_h together with the reference mixture estimate;
/// w_h / mu_hat_h is the estimated importance density d_h / mu_tilde_h.
struct ImportanceWeightTable {
  VisitationTable w;
  VisitationTable mu_hat;

  /// w / mu_hat with the 0/0 = 0 convention. A positive weight over a zero
  /// reference signals a support inconsistency and throws.
  double ratio(int h, int s, int a) const;
};

struct IdesConfig {
  double epsilon = 0.1;
  double delta = 0.1;
  double c_h = 8.0;            // iteration-count constant, calibratable
  int mom_reps = 0;            // 0 -> ceil(8 * ln(1/delta))
  double gamma_lower = 0.8;    // strong-convexity lower bound used in step sizes
  double holdout_fraction = 0.25;
  std::uint64_t step_iter_cap = 20000000;  // per-step iteration guard
  int trace_stride = 0;        // emit a trace row every this many iterations; 0 = off

  void require_valid() const;
};

int mom_rep_count(const IdesConfig& cfg);

/// Lower median: for even N the smaller of the two middle losses.
int mom_select_index(std::span<const double> losses);

/// Everything fixed while estimating one target policy's weights.
struct IdesProblem {
  const TabularMdp* mdp = nullptr;
  const PolicyTable* pi = nullptr;
  const VisitationTable* d_hat = nullptr;   // coarse (thresholded) d for pi
  const VisitationTable* mu_hat = nullptr;  // mixture of coarse estimates
};

/// Prescribed SGD iteration count for step h (0-based):
/// ceil(c_h * H^4/eps^2 * (sum d_h^2/mu_h + sum d_{h-1}^2/mu_{h-1})),
/// where the h = 0 predecessor term is the virtual unit coordinate.
std::uint64_t ides_iteration_count(const IdesProblem& prob, int h, const IdesConfig& cfg);

/// Exact step-h loss given the true sampling mixture (oracle/test use).
/// ratio_prev is the previous step's w/mu_hat table; ignored at h = 0 where
/// the virtual predecessor has ratio 1 and next-state law equal to the
/// initial distribution.
double exact_loss(const IdesProblem& prob, const VisitationTable& mu_tilde, int h,
                  std::span<const double> w_h, std::span<const double> ratio_prev);

std::vector<double> exact_loss_gradient(const IdesProblem& prob, const VisitationTable& mu_tilde,
                                        int h, std::span<const double> w_h,
                                        std::span<const double> ratio_prev);

/// One stochastic-gradient observation: a step-h pair from one trajectory and
/// a (step h-1 pair, step h state) from an independent one.
struct SgdSample {
  int s_h = 0, a_h = 0;
  int s_prev = 0, a_prev = 0, s_next = 0;
};

/// Dense unbiased stochastic gradient (test/diagnostic path; the production
/// loop applies the same two-term update sparsely).
std::vector<double> stochastic_gradient(const IdesProblem& prob, int h,
                                        std::span<const double> w,
                                        std::span<const double> ratio_prev,
                                        const SgdSample& sample);

using SgdSampleFn = std::function<SgdSample()>;

/// Projected SGD over the step-h quadratic loss: feasible box [0, 2*d_hat],
/// step size 2/(gamma*(i+1)), triangularly weighted iterate average.
std::vector<double> sgd_minimize_step(const IdesProblem& prob, int h, std::uint64_t n_iters,
                                      std::span<const double> ratio_prev, const SgdSampleFn& next,
                                      const IdesConfig& cfg);

struct IdesOutput {
  std::vector<ImportanceWeightTable> weights;  // per target, median-selected per step
  std::uint64_t trajectories = 0;
  bool iteration_capped = false;
};

/// Full estimator for a set of target policies sharing one sampling mixture.
/// Runs mom_reps independent repetitions on disjoint substreams; within a
/// repetition the step loop is sequential and all targets consume the same
/// sampled trajectories. Median selection over repetitions happens per
/// (target, step) using held-out loss evaluations.
IdesOutput run_ides(Simulator& sim, std::span<const PolicyTable> targets,
                    std::span<const CoarseVisitation> d_hats,
                    std::span<const PolicyTable> mixture_policies, const MixtureWeights& alpha,
                    const VisitationTable& mu_hat, const IdesConfig& cfg, RngStream rng,
                    std::ostream* trace = nullptr);

/// Single-target convenience wrapper.
ImportanceWeightTable run_ides(Simulator& sim, const PolicyTable& target,
                               const CoarseVisitation& d_hat,
                               std::span<const PolicyTable> mixture_policies,
                               const MixtureWeights& alpha, const VisitationTable& mu_hat,
                               const IdesConfig& cfg, RngStream rng);

/// Per-step L1 error sum |mu_tilde * w/mu_hat - d| against an oracle table
/// (pass the support-masked oracle to match the thresholding convention).
std::vector<double> density_l1_error(const ImportanceWeightTable& weights,
                                     const VisitationTable& mu_tilde,
                                     const VisitationTable& d_oracle);

/// Oracle table with entries zeroed wherever the coarse estimate is zero.
VisitationTable mask_to_support(const VisitationTable& oracle, const CoarseVisitation& coarse);

}  // namespace caesar
