#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caesar/coarse.hpp"
#include "caesar/ides.hpp"
#include "caesar/mdp.hpp"
#include "caesar/optdist.hpp"
#include "caesar/sampler.hpp"

namespace caesar {

/// Constants the analysis leaves unspecified. "theory" carries the defaults
/// used when reading the bounds verbatim; "calibrated" carries the smallest
/// values that pass the statistical reference suite (see harness.hpp).
struct TheoryConstants {
  double coarse_c = 32.0;  // sample-size constant of the coarse estimator
  double ides_c_h = 8.0;   // per-step SGD iteration constant
  double bernstein = 1.0;  // multiplier on the final-phase trajectory count
  double march_c = 8.0;    // layer batch constant of the all-policy estimator

  static TheoryConstants theory() { return {}; }
  static TheoryConstants calibrated();
};

struct CaesarConfig {
  double epsilon = 0.1;
  double delta = 0.1;
  std::uint64_t budget_cap = 100000000;
  bool calibrated_mode = true;
  std::optional<TheoryConstants> constants;  // overrides the mode default
  int mom_reps_override = 0;                 // 0 = ceil(8 ln(1/delta_ides))
  int trace_stride = 0;

  // Failure-probability split across the three phases.
  double delta_coarse_frac = 0.25;
  double delta_ides_frac = 0.5;
  double delta_final_frac = 0.25;

  TheoryConstants resolve_constants() const {
    if (constants) return *constants;
    return calibrated_mode ? TheoryConstants::calibrated() : TheoryConstants::theory();
  }
};

struct PhaseCounts {
  std::uint64_t coarse = 0;
  std::uint64_t ides = 0;
  std::uint64_t final_phase = 0;
  std::uint64_t total() const { return coarse + ides + final_phase; }
};

struct EvaluationReport {
  std::string mode;  // "caesar" or "mc"
  double epsilon = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> estimates;
  std::optional<std::vector<double>> oracle_values;  // present when the DP oracle is cheap
  PhaseCounts phases;
  TheoryConstants constants_used;
  bool solver_converged = true;
  bool iteration_capped = false;
  bool budget_exceeded = false;
  // Substream ids consumed per phase; the phases must stay pairwise disjoint.
  std::vector<std::uint64_t> coarse_streams, ides_streams, final_streams;
};

/// Full pipeline artifacts, for callers that reuse the weights or the final
/// batch (policy identification re-dots rewards on the same batch).
struct CaesarOutput {
  EvaluationReport report;
  std::vector<CoarseVisitation> coarse;  // thresholded, per target
  SamplingSolution solution;
  std::vector<ImportanceWeightTable> weights;
  std::vector<Trajectory> final_batch;
};

/// Importance-weighted value estimates from a shared batch: for each target,
/// (1/n) sum_i sum_h (w_h/mu_hat_h)(s,a) * r_h(s,a).
std::vector<double> final_estimator(std::span<const ImportanceWeightTable> weights,
                                    std::span<const Trajectory> batch);

/// Same estimator with the batch re-scored under explicit reward tables
/// ([H] x flat [S*A]); recorded rewards are ignored.
std::vector<double> final_estimator_with_rewards(
    std::span<const ImportanceWeightTable> weights, std::span<const Trajectory> batch,
    const std::vector<std::vector<double>>& reward_tables);

/// Bernstein-derived final-phase batch size:
/// ceil(8*H*rho*log(2K/delta)/eps^2 + 4*M*log(2K/delta)/(3*eps)) with
/// rho = sum_h max_k sum d_hat^2/mu_hat and M the largest realizable
/// per-trajectory weighted reward.
std::uint64_t final_sample_size(std::span<const CoarseVisitation> d_hats,
                                const VisitationTable& mu_hat, const TabularMdp& mdp,
                                double epsilon, double delta);

/// Per-policy on-policy rollout count for the Monte-Carlo baseline
/// (Hoeffding on returns in [0, H]).
std::uint64_t mc_sample_size(double epsilon, double delta, int horizon, int k_policies);

CaesarOutput run_caesar(const TabularMdp& mdp, std::span<const PolicyTable> targets,
                        const CaesarConfig& cfg, RngStream rng);

EvaluationReport evaluate_policies(const TabularMdp& mdp, std::span<const PolicyTable> targets,
                                   const CaesarConfig& cfg, RngStream rng);

EvaluationReport mc_baseline(const TabularMdp& mdp, std::span<const PolicyTable> targets,
                             double epsilon, double delta, RngStream rng);

/// Worst-case visitation-ratio value of the per-step-optimized mixture over
/// all deterministic policies; at most S*A by the uniform-argmax witness.
double deterministic_upper_bound_check(const TabularMdp& mdp, std::uint64_t cap = 1000000);

}  // namespace caesar
