#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "caesar/caesar.hpp"
#include "caesar/mdp.hpp"

namespace caesar {

struct RoundRecord {
  int round = 0;
  double gamma = 0.0;
  std::vector<int> survivors;      // candidate indices entering the round
  std::vector<double> estimates;   // aligned with survivors
  std::uint64_t trajectories = 0;
};

struct IdentificationResult {
  int chosen = -1;
  std::vector<RoundRecord> rounds;
  std::uint64_t total_trajectories = 0;
};

/// Indices (into `estimates`) that are not beaten by more than 2*gamma.
std::vector<int> eliminate(std::span<const double> estimates, double gamma);

/// Successive elimination with halving accuracy: rounds i = 1..ceil(log2(4/eps))
/// evaluate the survivors at accuracy gamma = 2^-i and drop every candidate
/// beaten by more than 2*gamma. The failure budget is split uniformly across
/// rounds; the final pick among survivors is uniform under the seeded stream.
IdentificationResult identify(const TabularMdp& mdp, std::span<const PolicyTable> candidates,
                              double epsilon, double delta, const CaesarConfig& base,
                              RngStream rng);

/// Multi-reward variant (experimental): a candidate is eliminated only when it
/// is beaten by more than 2*gamma under every reward table.
IdentificationResult identify_multi_reward(
    const TabularMdp& mdp, std::span<const PolicyTable> candidates,
    const std::vector<std::vector<std::vector<double>>>& reward_sets,  // [R][H] flat [S*A]
    double epsilon, double delta, const CaesarConfig& base, RngStream rng);

}  // namespace caesar
