#pragma once

#include <cstdint>

#include "caesar/mdp.hpp"
#include "caesar/sampler.hpp"

namespace caesar {

/// Parameters of the coarse (constant-multiplicative-accuracy) estimator.
/// With n = coarse_sample_size trajectories, all (h,s,a) simultaneously
/// satisfy |d_hat - d| <= max{epsilon, d/c_mult} with probability >= 1-delta.
struct CoarseConfig {
  double epsilon = 0.1;
  double delta = 0.1;
  double c_mult = 4.0;   // multiplicative accuracy divisor
  double c_univ = 32.0;  // universal sample-size constant, calibratable

  void require_valid() const;
};

struct CoarseVisitation {
  VisitationTable table;
  double epsilon_used = 0.0;   // per-entry additive accuracy the estimate targets
  bool thresholded = false;
  double threshold = 0.0;      // entries below this were zeroed (5 * eps')

  bool on_support(int h, int s, int a) const { return table.at(h, s, a) > 0.0; }
};

/// Trajectories needed for the simultaneous coarse event over k_policies
/// targets: ceil(C * (c_mult/4) * K * log(C*K/(eps*delta)) / eps).
/// At the default c_mult = 4 this is ceil(C*K*log(C*K/(eps*delta))/eps).
std::uint64_t coarse_sample_size(const CoarseConfig& cfg, int k_policies);

/// Empirical per-step state-action frequencies over n on-policy rollouts,
/// n = coarse_sample_size(cfg, 1) unless overridden.
CoarseVisitation coarse_estimate(Simulator& sim, const PolicyTable& policy,
                                 const CoarseConfig& cfg, RngStream& rng,
                                 std::uint64_t n_override = 0);
CoarseVisitation coarse_estimate(const TabularMdp& mdp, const PolicyTable& policy,
                                 const CoarseConfig& cfg, RngStream& rng);

/// Zero every entry below 5*eps' with eps' = epsilon/(14*S*A). Surviving
/// entries obey the pure multiplicative bound on the coarse event, and the
/// zeroed pairs' true mass totals at most epsilon/2.
CoarseVisitation threshold_low_mass(const CoarseVisitation& est, double epsilon);

/// True whenever |d_hat - d| <= max{epsilon, d/c_mult} for every (h,s,a);
/// oracle-side check used by calibration and tests.
bool coarse_event_holds(const VisitationTable& estimate, const VisitationTable& truth,
                        double epsilon, double c_mult = 4.0);

}  // namespace caesar
