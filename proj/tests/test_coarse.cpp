#include <doctest.h>

#include <cmath>

#include "caesar/caesar.hpp"
#include "caesar/coarse.hpp"
#include "caesar/harness.hpp"
#include "support/oracles.hpp"

using namespace caesar;
using namespace caesar::testing;

TEST_CASE("coarse_sample_size reproduces the closed form") {
  CoarseConfig cfg;
  cfg.epsilon = 0.1;
  cfg.delta = 0.1;
  cfg.c_univ = 32.0;
  // ceil(320 * ln(3200)) recomputed directly.
  const double expected = std::ceil(320.0 * std::log(32.0 / (0.1 * 0.1)));
  CHECK(coarse_sample_size(cfg, 1) == static_cast<std::uint64_t>(expected));
  CHECK(coarse_sample_size(cfg, 1) == 2583);
}

TEST_CASE("coarse_sample_size grows at least linearly in K and superlinearly in 1/eps") {
  CoarseConfig cfg;
  cfg.epsilon = 0.1;
  cfg.delta = 0.1;
  const auto n1 = coarse_sample_size(cfg, 2);
  const auto n2 = coarse_sample_size(cfg, 4);
  CHECK(n2 >= 2 * n1);

  CoarseConfig half = cfg;
  half.epsilon = 0.05;
  CHECK(coarse_sample_size(half, 2) > 2 * n1);
}

TEST_CASE("unreachable pairs are always estimated as zero") {
  // State 2 is unreachable: all transitions lead back to states 0 or 1.
  TabularMdp mdp = gen_random_mdp(3, 2, 3, {}, 61);
  for (int h = 0; h < mdp.horizon; ++h)
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 2; ++a) {
        auto& t = mdp.transitions[h];
        const std::size_t base = (static_cast<std::size_t>(s) * 2 + a) * 3;
        t[base] += t[base + 2];
        t[base + 2] = 0.0;
      }
  mdp.initial_dist = {0.6, 0.4, 0.0};
  require_valid(mdp);

  const PolicyTable pi = gen_random_policy(3, 2, 3, 62);
  CoarseConfig cfg;
  cfg.epsilon = 0.1;
  cfg.delta = 0.1;
  cfg.c_univ = 1.0;
  RngStream rng(1, 0);
  const CoarseVisitation est = coarse_estimate(mdp, pi, cfg, rng);
  for (int h = 0; h < mdp.horizon; ++h)
    for (int a = 0; a < 2; ++a) CHECK(est.table.at(h, 2, a) == 0.0);
}

TEST_CASE("single-path MDP estimates to exactly one on the path") {
  const TabularMdp mdp = single_path_mdp(3);
  const PolicyTable pi = single_action_policy(mdp);
  CoarseConfig cfg;
  cfg.epsilon = 0.1;
  cfg.delta = 0.1;
  cfg.c_univ = 1.0;
  RngStream rng(2, 0);
  const CoarseVisitation est = coarse_estimate(mdp, pi, cfg, rng);
  for (int h = 0; h < 3; ++h) CHECK(est.table.at(h, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("Bernoulli coarse accuracy holds in at least 90 percent of seeded runs") {
  const TabularMdp mdp = bernoulli_mdp(0.3);
  const PolicyTable pi = single_action_policy(mdp);
  CoarseConfig cfg;
  cfg.epsilon = 0.05;
  cfg.delta = 0.1;
  cfg.c_univ = 32.0;
  int hits = 0;
  const int runs = 1000;
  for (int run = 0; run < runs; ++run) {
    RngStream rng(1000 + run, 3);
    const CoarseVisitation est = coarse_estimate(mdp, pi, cfg, rng);
    if (std::abs(est.table.at(0, 0, 0) - 0.3) <= 0.075) ++hits;
  }
  CHECK(hits >= 900);
}

TEST_CASE("threshold_low_mass zeroes below and keeps above 5 eps'") {
  // S*A = 2, epsilon chosen so eps' = 0.01 and the cutoff is 0.05.
  CoarseVisitation est;
  est.table = VisitationTable::zeros(1, 2, 1);
  est.table.at(0, 0, 0) = 0.04;
  est.table.at(0, 1, 0) = 0.06;
  const CoarseVisitation cut = threshold_low_mass(est, 0.28);
  CHECK(cut.threshold == doctest::Approx(0.05));
  CHECK(cut.table.at(0, 0, 0) == 0.0);
  CHECK(cut.table.at(0, 1, 0) == doctest::Approx(0.06));
  CHECK(cut.thresholded);
}

TEST_CASE("thresholding never increases entries and drops little true mass") {
  const TabularMdp mdp = gen_random_mdp(4, 2, 3, {}, 71);
  const PolicyTable pi = gen_random_policy(4, 2, 3, 72);
  const VisitationTable truth = exact_visitation(mdp, pi);
  const double epsilon = 0.2;

  CoarseConfig cfg;
  cfg.epsilon = epsilon / (14.0 * mdp.sa());
  cfg.delta = 0.1;
  cfg.c_univ = TheoryConstants::calibrated().coarse_c;

  int coarse_runs = 0;
  for (int run = 0; run < 20; ++run) {
    RngStream rng(500 + run, 1);
    const CoarseVisitation raw = coarse_estimate(mdp, pi, cfg, rng);
    const CoarseVisitation cut = threshold_low_mass(raw, epsilon);

    double dropped_true_mass = 0.0;
    for (int h = 0; h < mdp.horizon; ++h)
      for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) {
          CHECK(cut.table.at(h, s, a) <= raw.table.at(h, s, a));
          if (cut.table.at(h, s, a) == 0.0) dropped_true_mass += truth.at(h, s, a);
        }

    if (!coarse_event_holds(raw.table, truth, cfg.epsilon)) continue;
    ++coarse_runs;
    // Total ignored true mass per step stays within the budget.
    CHECK(dropped_true_mass <= mdp.horizon * epsilon / 2.0 + 1e-12);
    // Sandwich bounds on every surviving entry.
    for (int h = 0; h < mdp.horizon; ++h)
      for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) {
          const double d_hat = cut.table.at(h, s, a);
          if (d_hat == 0.0) continue;
          const double d = truth.at(h, s, a);
          CHECK(d >= 0.8 * d_hat - 1e-12);
          CHECK(d <= 4.0 / 3.0 * d_hat + 1e-12);
        }
  }
  CHECK(coarse_runs >= 15);  // the coarse event itself should be common
}

TEST_CASE("coverage rate over 100 seeded runs meets the statistical floor") {
  const TabularMdp mdp = gen_random_mdp(4, 2, 3, {}, 81);
  const PolicyTable pi = gen_random_policy(4, 2, 3, 82);
  const VisitationTable truth = exact_visitation(mdp, pi);

  CoarseConfig cfg;
  cfg.epsilon = 0.05;
  cfg.delta = 0.1;
  cfg.c_univ = TheoryConstants::calibrated().coarse_c;

  int hits = 0;
  for (int run = 0; run < 100; ++run) {
    RngStream rng(9000 + run, 2);
    const CoarseVisitation est = coarse_estimate(mdp, pi, cfg, rng);
    if (coarse_event_holds(est.table, truth, cfg.epsilon)) ++hits;
  }
  CHECK(hits >= 85);
}
