#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "caesar/coarse.hpp"
#include "caesar/mdp.hpp"
#include "caesar/sampler.hpp"

namespace caesar {

/// dist^beta(x, y) = min over alpha in [1/beta, beta] of |alpha*x - y|,
/// computed in closed form: zero when y lies in [x/beta, beta*x], otherwise
/// the distance to the nearer endpoint of that band.
double beta_dist(double x, double y, double beta);

/// Coordinatewise sum of scalar distances.
double beta_dist_vec(std::span<const double> x, std::span<const double> y, double beta);

struct BetaDistanceParams {
  double beta = 1.0;
  void require_valid() const;
};

enum class CoverMode { oracle_cover, uniform_mixture };

struct CoverageViolation {
  int h = 0, s = 0, a = 0;
  double mu = 0.0;
  double required = 0.0;
};

/// A sampling distribution over trajectories realized as a policy mixture,
/// together with its exact occupancy table and the result of checking the
/// coverage bound mu_h(s,a) >= d_max_h(s,a) / (2*H*S*A) on reachable states.
struct CoverDistribution {
  std::vector<PolicyTable> policies;
  MixtureWeights weights;
  VisitationTable occupancy;  // exact mixture occupancy, oracle-computed
  std::string provenance;     // "oracle-cover" or "uniform-mixture"
  bool coverage_ok = true;
  std::vector<CoverageViolation> violations;
};

/// oracle_cover: uniform mixture over per-(h,s,a) argmax deterministic
/// policies (meets the coverage bound by construction on enumerable MDPs).
/// uniform_mixture: the uniform-random policy, bound asserted not guaranteed.
CoverDistribution build_cover(const TabularMdp& mdp, CoverMode mode, double epsilon,
                              std::uint64_t cap = 1000000);

struct MarchConfig {
  double epsilon = 0.1;
  double delta = 0.1;
  double c_univ = 8.0;  // batch-size constant, calibratable
  std::uint64_t layer_batch_cap = 50000000;

  void require_valid() const;
};

struct CoverSupportViolation : std::runtime_error {
  CoverSupportViolation(int h, int s, int a)
      : std::runtime_error("sample landed on a state-action with zero estimated cover mass at h=" +
                           std::to_string(h) + " s=" + std::to_string(s) + " a=" +
                           std::to_string(a)) {}
};

/// Shared per-layer data: one initial-state batch, per-layer coarse cover
/// estimates and per-layer transition triples. Estimates for every policy are
/// importance-weighted aggregations over these shared batches.
struct MarchData {
  int num_states = 0, num_actions = 0, horizon = 0;
  double epsilon = 0.0;
  double clip_bound = 0.0;  // importance weights are clipped at 2*H*S*A
  std::vector<double> nu_hat;                    // coarse initial-state estimate
  std::vector<std::vector<double>> mu_hat;       // layers 0..H-2, flat [S*A]
  struct Triple {
    int s, a, s_next;
  };
  std::vector<std::vector<Triple>> batches;      // layers 0..H-2
  std::uint64_t trajectories = 0;
};

MarchData march_collect(Simulator& sim, const CoverDistribution& cover, const MarchConfig& cfg,
                        RngStream rng);

/// Layer-by-layer importance-weighted coarse estimate of one policy's
/// visitations from the shared batches.
CoarseVisitation march_estimate(const MarchData& data, const PolicyTable& policy);

/// Convenience: collect and estimate in one call.
CoarseVisitation march_estimate(const TabularMdp& mdp, const CoverDistribution& cover,
                                const PolicyTable& policy, double epsilon, RngStream& rng,
                                const MarchConfig* cfg = nullptr);

struct BetaDiagnostic {
  std::vector<double> per_step;  // dist^{e^2}(d_hat_h, d_h)
  double bound = 0.0;            // H * (1 + e^2) * epsilon
};

BetaDiagnostic beta_dist_diagnostic(const CoarseVisitation& d_hat,
                                    const VisitationTable& d_oracle, double epsilon);

}  // namespace caesar
