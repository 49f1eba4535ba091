#include "caesar/coarse.hpp"

#include <cmath>
#include <stdexcept>

namespace caesar {

void CoarseConfig::require_valid() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
  if (c_mult < 1.0) throw std::invalid_argument("c_mult must be >= 1");
  if (c_univ <= 0.0) throw std::invalid_argument("c_univ must be positive");
}

std::uint64_t coarse_sample_size(const CoarseConfig& cfg, int k_policies) {
  cfg.require_valid();
  if (k_policies < 1) throw std::invalid_argument("k_policies must be >= 1");
  const double c = cfg.c_univ;
  const double k = static_cast<double>(k_policies);
  const double n =
      c * (cfg.c_mult / 4.0) * k * std::log(c * k / (cfg.epsilon * cfg.delta)) / cfg.epsilon;
  return static_cast<std::uint64_t>(std::ceil(n));
}

CoarseVisitation coarse_estimate(Simulator& sim, const PolicyTable& policy,
                                 const CoarseConfig& cfg, RngStream& rng,
                                 std::uint64_t n_override) {
  const std::uint64_t n = n_override > 0 ? n_override : coarse_sample_size(cfg, 1);
  const TabularMdp& mdp = sim.mdp();
  CoarseVisitation est;
  est.table = VisitationTable::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
  est.epsilon_used = cfg.epsilon;

  for (std::uint64_t i = 0; i < n; ++i) {
    const Trajectory traj = sim.rollout(policy, rng);
    for (int h = 0; h < traj.length(); ++h) est.table.at(h, traj.states[h], traj.actions[h]) += 1.0;
  }
  const double unit = 1.0 / static_cast<double>(n);
  for (auto& step : est.table.steps)
    for (double& v : step) v *= unit;
  return est;
}

CoarseVisitation coarse_estimate(const TabularMdp& mdp, const PolicyTable& policy,
                                 const CoarseConfig& cfg, RngStream& rng) {
  Simulator sim(mdp);
  return coarse_estimate(sim, policy, cfg, rng);
}

CoarseVisitation threshold_low_mass(const CoarseVisitation& est, double epsilon) {
  const double sa = static_cast<double>(est.table.num_states) * est.table.num_actions;
  const double eps_prime = epsilon / (14.0 * sa);
  const double cutoff = 5.0 * eps_prime;

  CoarseVisitation out = est;
  out.thresholded = true;
  out.threshold = cutoff;
  out.epsilon_used = eps_prime;
  for (auto& step : out.table.steps)
    for (double& v : step)
      if (v < cutoff) v = 0.0;
  return out;
}

bool coarse_event_holds(const VisitationTable& estimate, const VisitationTable& truth,
                        double epsilon, double c_mult) {
  for (int h = 0; h < truth.horizon; ++h)
    for (int s = 0; s < truth.num_states; ++s)
      for (int a = 0; a < truth.num_actions; ++a) {
        const double d = truth.at(h, s, a);
        const double err = std::abs(estimate.at(h, s, a) - d);
        if (err > std::max(epsilon, d / c_mult) + 1e-12) return false;
      }
  return true;
}

}  // namespace caesar
