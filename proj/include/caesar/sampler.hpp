#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "caesar/mdp.hpp"
#include "caesar/rng.hpp"

namespace caesar {

/// One episode: exactly H (state, action, reward) triples for a full rollout,
/// fewer for a prefix rollout that stops early.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;

  int length() const { return static_cast<int>(states.size()); }
};

/// Simplex weights over the K target policies.
struct MixtureWeights {
  std::vector<double> alpha;

  int size() const { return static_cast<int>(alpha.size()); }
  void require_valid() const;
};

Trajectory rollout(const TabularMdp& mdp, const PolicyTable& policy, RngStream& rng);

/// Rollout stopped after step `upto_h` (1-based count of steps taken).
/// The marginal law of (s_h, a_h) matches a full rollout's step h.
Trajectory rollout_prefix(const TabularMdp& mdp, const PolicyTable& policy, int upto_h,
                          RngStream& rng);

/// Draw a policy index from alpha, then roll it out; repeated n times. One
/// index per whole trajectory, so the per-step state-action marginal is the
/// alpha-mixture of the per-policy visitations.
std::vector<std::pair<int, Trajectory>> rollout_mixture(const TabularMdp& mdp,
                                                        std::span<const PolicyTable> policies,
                                                        const MixtureWeights& alpha, int n,
                                                        RngStream& rng);

/// Rollout access with an instrumented trajectory counter. Every episode
/// started (full or prefix) counts once; the budget ledger in evaluation
/// reports is reconciled against this counter.
class Simulator {
 public:
  explicit Simulator(const TabularMdp& mdp) : mdp_(&mdp) {}

  const TabularMdp& mdp() const { return *mdp_; }

  Trajectory rollout(const PolicyTable& policy, RngStream& rng) {
    ++count_;
    return caesar::rollout(*mdp_, policy, rng);
  }
  Trajectory rollout_prefix(const PolicyTable& policy, int upto_h, RngStream& rng) {
    ++count_;
    return caesar::rollout_prefix(*mdp_, policy, upto_h, rng);
  }
  int pick(const MixtureWeights& alpha, RngStream& rng) const {
    return rng.categorical(alpha.alpha);
  }
  Trajectory rollout_mixture_one(std::span<const PolicyTable> policies,
                                 const MixtureWeights& alpha, RngStream& rng) {
    return rollout(policies[pick(alpha, rng)], rng);
  }
  Trajectory rollout_mixture_prefix(std::span<const PolicyTable> policies,
                                    const MixtureWeights& alpha, int upto_h, RngStream& rng) {
    return rollout_prefix(policies[pick(alpha, rng)], upto_h, rng);
  }

  std::uint64_t trajectories() const { return count_; }

 private:
  const TabularMdp* mdp_;
  std::uint64_t count_ = 0;
};

/// Empirical per-step state-action frequencies of a batch.
VisitationTable empirical_visitation(const TabularMdp& mdp, std::span<const Trajectory> batch);

}  // namespace caesar
