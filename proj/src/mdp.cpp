#include "caesar/mdp.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace caesar {

PolicyTable PolicyTable::deterministic(int horizon, int num_states, int num_actions,
                                       const std::vector<std::vector<int>>& action) {
  PolicyTable pi;
  pi.horizon = horizon;
  pi.num_states = num_states;
  pi.num_actions = num_actions;
  pi.table.assign(horizon, std::vector<double>(static_cast<std::size_t>(num_states) * num_actions, 0.0));
  for (int h = 0; h < horizon; ++h)
    for (int s = 0; s < num_states; ++s)
      pi.table[h][static_cast<std::size_t>(s) * num_actions + action[h][s]] = 1.0;
  return pi;
}

VisitationTable VisitationTable::zeros(int horizon, int num_states, int num_actions) {
  VisitationTable v;
  v.horizon = horizon;
  v.num_states = num_states;
  v.num_actions = num_actions;
  v.steps.assign(horizon, std::vector<double>(static_cast<std::size_t>(num_states) * num_actions, 0.0));
  return v;
}

double VisitationTable::step_mass(int h) const {
  return std::accumulate(steps[h].begin(), steps[h].end(), 0.0);
}

std::string ValidationIssue::to_string() const {
  std::ostringstream os;
  os << what;
  if (h >= 0 || s >= 0 || a >= 0) {
    os << " at (";
    if (h >= 0) os << "h=" << h;
    if (s >= 0) os << (h >= 0 ? "," : "") << "s=" << s;
    if (a >= 0) os << ",a=" << a;
    os << ")";
  }
  return os.str();
}

std::string ValidationReport::to_string() const {
  if (ok()) return "valid";
  std::ostringstream os;
  for (const auto& issue : issues) os << issue.to_string() << "\n";
  return os.str();
}

ValidationReport validate_mdp(const TabularMdp& mdp) {
  ValidationReport report;
  auto add = [&](std::string what, int h = -1, int s = -1, int a = -1) {
    report.issues.push_back({std::move(what), h, s, a});
  };

  if (mdp.num_states < 1) add("num_states must be >= 1");
  if (mdp.num_actions < 1) add("num_actions must be >= 1");
  if (mdp.horizon < 1) add("horizon must be >= 1");
  if (!report.ok()) return report;

  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  if (static_cast<int>(mdp.initial_dist.size()) != S) {
    add("initial_dist has wrong length");
    return report;
  }
  if (static_cast<int>(mdp.transitions.size()) != H || static_cast<int>(mdp.rewards.size()) != H) {
    add("transitions/rewards must have one table per step");
    return report;
  }
  for (int h = 0; h < H; ++h) {
    if (static_cast<int>(mdp.transitions[h].size()) != S * A * S) add("transition table has wrong shape", h);
    if (static_cast<int>(mdp.rewards[h].size()) != S * A) add("reward table has wrong shape", h);
  }
  if (!report.ok()) return report;

  double nu_sum = 0.0;
  for (int s = 0; s < S; ++s) {
    if (mdp.initial_dist[s] < 0.0) add("initial_dist entry negative", -1, s);
    nu_sum += mdp.initial_dist[s];
  }
  if (std::abs(nu_sum - 1.0) > kProbTolerance) add("initial_dist does not sum to 1");

  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double row_sum = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
          const double p = mdp.transition(h, s, a, s2);
          if (p < 0.0) add("transition probability negative", h, s, a);
          row_sum += p;
        }
        if (std::abs(row_sum - 1.0) > kProbTolerance) add("transition row does not sum to 1", h, s, a);
        const double r = mdp.reward(h, s, a);
        if (r < 0.0 || r > 1.0) add("reward outside [0,1]", h, s, a);
      }
    }
  }
  return report;
}

ValidationReport validate_policy(const PolicyTable& policy, int num_states, int num_actions,
                                 int horizon) {
  ValidationReport report;
  auto add = [&](std::string what, int h = -1, int s = -1, int a = -1) {
    report.issues.push_back({std::move(what), h, s, a});
  };
  if (policy.horizon != horizon || policy.num_states != num_states ||
      policy.num_actions != num_actions) {
    add("policy dimensions do not match the MDP");
    return report;
  }
  if (static_cast<int>(policy.table.size()) != horizon) {
    add("policy table has wrong number of steps");
    return report;
  }
  for (int h = 0; h < horizon; ++h) {
    if (static_cast<int>(policy.table[h].size()) != num_states * num_actions) {
      add("policy step table has wrong shape", h);
      continue;
    }
    for (int s = 0; s < num_states; ++s) {
      double row_sum = 0.0;
      for (int a = 0; a < num_actions; ++a) {
        const double p = policy.prob(h, s, a);
        if (p < 0.0) add("action probability negative", h, s, a);
        row_sum += p;
      }
      if (std::abs(row_sum - 1.0) > kProbTolerance) add("action row does not sum to 1", h, s);
    }
  }
  return report;
}

void require_valid(const TabularMdp& mdp) {
  auto report = validate_mdp(mdp);
  if (!report.ok()) throw std::invalid_argument("invalid MDP:\n" + report.to_string());
}

void require_valid(const TabularMdp& mdp, const PolicyTable& policy) {
  require_valid(mdp);
  auto report = validate_policy(policy, mdp.num_states, mdp.num_actions, mdp.horizon);
  if (!report.ok()) throw std::invalid_argument("invalid policy:\n" + report.to_string());
}

VisitationTable exact_visitation(const TabularMdp& mdp, const PolicyTable& policy) {
  if (policy.horizon != mdp.horizon || policy.num_states != mdp.num_states ||
      policy.num_actions != mdp.num_actions)
    throw std::invalid_argument("exact_visitation: policy dimensions do not match the MDP");
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  VisitationTable d = VisitationTable::zeros(H, S, A);

  std::vector<double> state_mass(mdp.initial_dist);
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) d.at(h, s, a) = state_mass[s] * policy.prob(h, s, a);
    if (h + 1 < H) {
      std::vector<double> next(S, 0.0);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const double mass = d.at(h, s, a);
          if (mass == 0.0) continue;
          for (int s2 = 0; s2 < S; ++s2) next[s2] += mass * mdp.transition(h, s, a, s2);
        }
      }
      state_mass = std::move(next);
    }
  }
  return d;
}

double exact_value(const TabularMdp& mdp, const PolicyTable& policy) {
  const VisitationTable d = exact_visitation(mdp, policy);
  double value = 0.0;
  for (int h = 0; h < mdp.horizon; ++h)
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) value += d.at(h, s, a) * mdp.reward(h, s, a);
  return value;
}

double exact_value_backward(const TabularMdp& mdp, const PolicyTable& policy) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  std::vector<double> v_next(S, 0.0);
  for (int h = H - 1; h >= 0; --h) {
    std::vector<double> v(S, 0.0);
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int a = 0; a < A; ++a) {
        const double p = policy.prob(h, s, a);
        if (p == 0.0) continue;
        double q = mdp.reward(h, s, a);
        if (h + 1 < H)
          for (int s2 = 0; s2 < S; ++s2) q += mdp.transition(h, s, a, s2) * v_next[s2];
        acc += p * q;
      }
      v[s] = acc;
    }
    v_next = std::move(v);
  }
  double value = 0.0;
  for (int s = 0; s < S; ++s) value += mdp.initial_dist[s] * v_next[s];
  return value;
}

std::uint64_t deterministic_policy_count(const TabularMdp& mdp) {
  const std::uint64_t base = static_cast<std::uint64_t>(mdp.num_actions);
  std::uint64_t count = 1;
  for (int i = 0; i < mdp.num_states * mdp.horizon; ++i) {
    if (count > UINT64_MAX / base) return UINT64_MAX;
    count *= base;
  }
  return count;
}

EnumerationCapError::EnumerationCapError(std::uint64_t count_, std::uint64_t cap_)
    : std::runtime_error("deterministic policy count " + std::to_string(count_) +
                         " exceeds cap " + std::to_string(cap_)),
      count(count_),
      cap(cap_) {}

std::vector<PolicyTable> enumerate_deterministic_policies(const TabularMdp& mdp,
                                                          std::uint64_t cap) {
  const std::uint64_t count = deterministic_policy_count(mdp);
  if (count > cap) throw EnumerationCapError(count, cap);
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;

  std::vector<PolicyTable> out;
  out.reserve(count);
  std::vector<std::vector<int>> action(H, std::vector<int>(S, 0));
  // Mixed-radix counter over the H*S action slots.
  while (true) {
    out.push_back(PolicyTable::deterministic(H, S, A, action));
    int slot = 0;
    for (; slot < H * S; ++slot) {
      int& digit = action[slot / S][slot % S];
      if (++digit < A) break;
      digit = 0;
    }
    if (slot == H * S) break;
  }
  return out;
}

}  // namespace caesar
