#include "caesar/policy_id.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace caesar {

std::vector<int> eliminate(std::span<const double> estimates, double gamma) {
  if (estimates.empty()) return {};
  const double best = *std::max_element(estimates.begin(), estimates.end());
  std::vector<int> survivors;
  for (int i = 0; i < static_cast<int>(estimates.size()); ++i)
    if (best - estimates[i] <= 2.0 * gamma) survivors.push_back(i);
  return survivors;
}

namespace {

IdentificationResult identify_impl(
    const TabularMdp& mdp, std::span<const PolicyTable> candidates,
    const std::vector<std::vector<std::vector<double>>>* reward_sets, double epsilon,
    double delta, const CaesarConfig& base, RngStream rng) {
  if (candidates.empty()) throw std::invalid_argument("identify: no candidates");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");

  IdentificationResult result;
  std::vector<int> active(candidates.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = static_cast<int>(i);

  const int rounds = static_cast<int>(std::ceil(std::log2(4.0 / epsilon)));
  const double delta_round = delta / std::max(rounds, 1);

  for (int i = 1; i <= rounds && active.size() > 1; ++i) {
    const double gamma = std::pow(2.0, -i);
    std::vector<PolicyTable> survivors;
    survivors.reserve(active.size());
    for (int idx : active) survivors.push_back(candidates[idx]);

    CaesarConfig cfg = base;
    cfg.epsilon = gamma;
    cfg.delta = delta_round;
    const CaesarOutput run =
        run_caesar(mdp, survivors, cfg, rng.substream(static_cast<std::uint64_t>(i)));

    RoundRecord record;
    record.round = i;
    record.gamma = gamma;
    record.survivors = active;
    record.trajectories = run.report.phases.total();
    result.total_trajectories += record.trajectories;

    std::vector<int> keep_local;
    if (!reward_sets) {
      record.estimates = run.report.estimates;
      keep_local = eliminate(record.estimates, gamma);
    } else {
      // A candidate survives when at least one reward leaves it within margin.
      const std::size_t n_active = active.size();
      std::vector<char> beaten_everywhere(n_active, 1);
      for (const auto& rewards : *reward_sets) {
        const std::vector<double> est =
            final_estimator_with_rewards(run.weights, run.final_batch, rewards);
        const std::vector<int> ok = eliminate(est, gamma);
        for (int j : ok) beaten_everywhere[j] = 0;
        record.estimates = est;  // audit keeps the last reward's estimates
      }
      for (std::size_t j = 0; j < n_active; ++j)
        if (!beaten_everywhere[j]) keep_local.push_back(static_cast<int>(j));
    }

    std::vector<int> next;
    next.reserve(keep_local.size());
    for (int j : keep_local) next.push_back(active[j]);
    result.rounds.push_back(std::move(record));
    active = std::move(next);
    if (active.empty())
      throw std::runtime_error("identify: all candidates eliminated (estimates inconsistent)");
  }

  RngStream pick_rng = rng.substream(0xF1A7);
  result.chosen = active[static_cast<std::size_t>(pick_rng.next_u64() % active.size())];
  return result;
}

}  // namespace

IdentificationResult identify(const TabularMdp& mdp, std::span<const PolicyTable> candidates,
                              double epsilon, double delta, const CaesarConfig& base,
                              RngStream rng) {
  return identify_impl(mdp, candidates, nullptr, epsilon, delta, base, rng);
}

IdentificationResult identify_multi_reward(
    const TabularMdp& mdp, std::span<const PolicyTable> candidates,
    const std::vector<std::vector<std::vector<double>>>& reward_sets, double epsilon,
    double delta, const CaesarConfig& base, RngStream rng) {
  if (reward_sets.empty()) throw std::invalid_argument("identify_multi_reward: no rewards");
  return identify_impl(mdp, candidates, &reward_sets, epsilon, delta, base, rng);
}

}  // namespace caesar
