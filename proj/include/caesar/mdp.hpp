#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace caesar {

inline constexpr double kProbTolerance = 1e-9;

/// Episodic tabular MDP with time-inhomogeneous transitions and rewards.
/// Steps are indexed h = 0..H-1 internally. Transitions for the last step are
/// stored (the file format carries H tables) but never used: an episode is
/// exactly H state-action pairs, with no terminal state afterwards.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> initial_dist;              // [S]
  std::vector<std::vector<double>> transitions;  // [H], each flat [S*A*S]
  std::vector<std::vector<double>> rewards;      // [H], each flat [S*A]

  int sa() const { return num_states * num_actions; }

  double transition(int h, int s, int a, int s_next) const {
    return transitions[h][(static_cast<std::size_t>(s) * num_actions + a) * num_states + s_next];
  }
  double reward(int h, int s, int a) const {
    return rewards[h][static_cast<std::size_t>(s) * num_actions + a];
  }
};

/// Per-step action distribution tables pi_h(a|s).
struct PolicyTable {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<std::vector<double>> table;  // [H], each flat [S*A]

  double prob(int h, int s, int a) const {
    return table[h][static_cast<std::size_t>(s) * num_actions + a];
  }
  /// Point-mass policy on `action(h, s)`.
  static PolicyTable deterministic(int horizon, int num_states, int num_actions,
                                   const std::vector<std::vector<int>>& action);
};

/// Per-step state-action mass tables. Used for exact visitations (each step
/// sums to 1), coarse estimates, mixtures, and importance-weight tables.
struct VisitationTable {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<std::vector<double>> steps;  // [H], each flat [S*A]

  static VisitationTable zeros(int horizon, int num_states, int num_actions);

  double at(int h, int s, int a) const {
    return steps[h][static_cast<std::size_t>(s) * num_actions + a];
  }
  double& at(int h, int s, int a) {
    return steps[h][static_cast<std::size_t>(s) * num_actions + a];
  }
  double step_mass(int h) const;
};

struct ValidationIssue {
  std::string what;
  int h = -1, s = -1, a = -1;  // -1 where not applicable
  std::string to_string() const;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string to_string() const;
};

ValidationReport validate_mdp(const TabularMdp& mdp);
ValidationReport validate_policy(const PolicyTable& policy, int num_states, int num_actions,
                                 int horizon);

/// Throwing wrappers used by loaders and entry points.
void require_valid(const TabularMdp& mdp);
void require_valid(const TabularMdp& mdp, const PolicyTable& policy);

/// Exact per-step visitation distributions d_h(s,a) by forward recursion.
VisitationTable exact_visitation(const TabularMdp& mdp, const PolicyTable& policy);

/// Exact policy value: sum over steps of visitation-weighted rewards.
double exact_value(const TabularMdp& mdp, const PolicyTable& policy);

/// Same value through the backward recursion; an independent algebraic route.
double exact_value_backward(const TabularMdp& mdp, const PolicyTable& policy);

std::uint64_t deterministic_policy_count(const TabularMdp& mdp);

struct EnumerationCapError : std::runtime_error {
  EnumerationCapError(std::uint64_t count, std::uint64_t cap);
  std::uint64_t count;
  std::uint64_t cap;
};

/// All A^(S*H) deterministic policies, each exactly once. Throws
/// EnumerationCapError when the count exceeds `cap`.
std::vector<PolicyTable> enumerate_deterministic_policies(const TabularMdp& mdp,
                                                          std::uint64_t cap = 1000000);

}  // namespace caesar
