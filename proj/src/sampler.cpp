#include "caesar/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace caesar {

void MixtureWeights::require_valid() const {
  if (alpha.empty()) throw std::invalid_argument("mixture weights are empty");
  double sum = 0.0;
  for (double w : alpha) {
    if (w < 0.0) throw std::invalid_argument("mixture weight negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kProbTolerance)
    throw std::invalid_argument("mixture weights do not sum to 1");
}

Trajectory rollout_prefix(const TabularMdp& mdp, const PolicyTable& policy, int upto_h,
                          RngStream& rng) {
  const int S = mdp.num_states, A = mdp.num_actions;
  Trajectory traj;
  traj.states.reserve(upto_h);
  traj.actions.reserve(upto_h);
  traj.rewards.reserve(upto_h);

  int s = rng.categorical(mdp.initial_dist);
  for (int h = 0; h < upto_h; ++h) {
    const double* row = policy.table[h].data() + static_cast<std::size_t>(s) * A;
    const int a = rng.categorical({row, static_cast<std::size_t>(A)});
    traj.states.push_back(s);
    traj.actions.push_back(a);
    traj.rewards.push_back(mdp.reward(h, s, a));
    if (h + 1 < mdp.horizon) {
      const double* trow =
          mdp.transitions[h].data() + (static_cast<std::size_t>(s) * A + a) * S;
      s = rng.categorical({trow, static_cast<std::size_t>(S)});
    }
  }
  return traj;
}

Trajectory rollout(const TabularMdp& mdp, const PolicyTable& policy, RngStream& rng) {
  return rollout_prefix(mdp, policy, mdp.horizon, rng);
}

std::vector<std::pair<int, Trajectory>> rollout_mixture(const TabularMdp& mdp,
                                                        std::span<const PolicyTable> policies,
                                                        const MixtureWeights& alpha, int n,
                                                        RngStream& rng) {
  if (policies.empty()) throw std::invalid_argument("rollout_mixture: empty policy list");
  if (alpha.size() != static_cast<int>(policies.size()))
    throw std::invalid_argument("rollout_mixture: alpha length does not match policy count");
  alpha.require_valid();

  std::vector<std::pair<int, Trajectory>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int k = rng.categorical(alpha.alpha);
    out.emplace_back(k, rollout(mdp, policies[k], rng));
  }
  return out;
}

VisitationTable empirical_visitation(const TabularMdp& mdp, std::span<const Trajectory> batch) {
  VisitationTable freq = VisitationTable::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
  if (batch.empty()) return freq;
  const double unit = 1.0 / static_cast<double>(batch.size());
  for (const auto& traj : batch)
    for (int h = 0; h < traj.length(); ++h) freq.at(h, traj.states[h], traj.actions[h]) += unit;
  return freq;
}

}  // namespace caesar
