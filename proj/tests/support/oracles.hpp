#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "caesar/mdp.hpp"
#include "caesar/optdist.hpp"

namespace caesar::testing {

/// Visitation masses by exhaustive enumeration of all (S*A)^H action-state
/// paths; independent of the forward-recursion implementation.
inline VisitationTable enumerate_visitation(const TabularMdp& mdp, const PolicyTable& policy) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  VisitationTable d = VisitationTable::zeros(H, S, A);

  struct Frame {
    int s;
    double prob;
  };
  std::function<void(int, int, double)> walk = [&](int h, int s, double prob) {
    if (prob == 0.0 || h == H) return;
    for (int a = 0; a < A; ++a) {
      const double pa = policy.prob(h, s, a) * prob;
      if (pa == 0.0) continue;
      d.at(h, s, a) += pa;
      if (h + 1 < H)
        for (int s2 = 0; s2 < S; ++s2) walk(h + 1, s2, pa * mdp.transition(h, s, a, s2));
    }
  };
  for (int s = 0; s < S; ++s) walk(0, s, mdp.initial_dist[s]);
  return d;
}

/// Minimize the step objective over the simplex by exhaustive grid search
/// (K <= 3). Returns the best alpha found at the given resolution.
inline MixtureWeights grid_search_alpha(const SamplingObjective& obj, double resolution,
                                        int only_h = -1) {
  const int K = obj.num_policies();
  MixtureWeights best;
  double best_value = std::numeric_limits<double>::infinity();
  const int steps = static_cast<int>(std::round(1.0 / resolution));

  auto consider = [&](const std::vector<double>& alpha) {
    MixtureWeights w{alpha};
    double value = 0.0;
    for (int h = 0; h < obj.horizon; ++h) {
      if (only_h >= 0 && h != only_h) continue;
      value += objective_value(obj, w, h);
    }
    if (value < best_value) {
      best_value = value;
      best = w;
    }
  };

  if (K == 1) {
    consider({1.0});
  } else if (K == 2) {
    for (int i = 0; i <= steps; ++i) {
      const double a = static_cast<double>(i) / steps;
      consider({a, 1.0 - a});
    }
  } else if (K == 3) {
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps - i; ++j) {
        const double a = static_cast<double>(i) / steps;
        const double b = static_cast<double>(j) / steps;
        consider({a, b, 1.0 - a - b});
      }
  } else {
    throw std::invalid_argument("grid_search_alpha supports K <= 3");
  }
  return best;
}

/// Direct minimization of |alpha*x - y| over a dense grid of alpha in
/// [1/beta, beta] augmented with the interior critical point y/x.
inline double beta_dist_grid(double x, double y, double beta, int grid = 2000) {
  const double lo = 1.0 / beta, hi = beta;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double alpha = lo + (hi - lo) * i / grid;
    best = std::min(best, std::abs(alpha * x - y));
  }
  if (x > 0.0) {
    const double critical = std::clamp(y / x, lo, hi);
    best = std::min(best, std::abs(critical * x - y));
  }
  return best;
}

/// Deterministic single-path MDP: one state, one action.
inline TabularMdp single_path_mdp(int horizon) {
  TabularMdp mdp;
  mdp.num_states = 1;
  mdp.num_actions = 1;
  mdp.horizon = horizon;
  mdp.initial_dist = {1.0};
  mdp.transitions.assign(horizon, {1.0});
  mdp.rewards.assign(horizon, {1.0});
  return mdp;
}

inline PolicyTable single_action_policy(const TabularMdp& mdp) {
  std::vector<std::vector<int>> action(mdp.horizon, std::vector<int>(mdp.num_states, 0));
  return PolicyTable::deterministic(mdp.horizon, mdp.num_states, mdp.num_actions, action);
}

/// Two-state chain whose first-step visitation of (s=0, a=0) equals p.
inline TabularMdp bernoulli_mdp(double p) {
  TabularMdp mdp;
  mdp.num_states = 2;
  mdp.num_actions = 1;
  mdp.horizon = 1;
  mdp.initial_dist = {p, 1.0 - p};
  mdp.transitions.assign(1, std::vector<double>{1.0, 0.0, 0.0, 1.0});
  mdp.rewards.assign(1, std::vector<double>{1.0, 0.0});
  return mdp;
}

}  // namespace caesar::testing
