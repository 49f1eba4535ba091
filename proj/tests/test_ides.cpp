#include <doctest.h>

#include <cmath>
#include <numeric>

#include "caesar/caesar.hpp"
#include "caesar/harness.hpp"
#include "caesar/ides.hpp"
#include "support/oracles.hpp"

using namespace caesar;
using namespace caesar::testing;

namespace {

struct Toy {
  TabularMdp mdp;
  std::vector<PolicyTable> policies;
  std::vector<VisitationTable> oracle;
  MixtureWeights alpha;
  VisitationTable mu_tilde;  // exact mixture
  VisitationTable mu_hat;    // reference table used as the estimate
};

/// Mixture toy with exact tables standing in for the coarse estimates.
Toy make_toy(std::uint64_t seed, int S = 2, int A = 2, int H = 2, int K = 2) {
  Toy toy;
  toy.mdp = gen_random_mdp(S, A, H, {}, seed);
  for (int k = 0; k < K; ++k) toy.policies.push_back(gen_random_policy(S, A, H, seed * 13 + k));
  for (const auto& pi : toy.policies) toy.oracle.push_back(exact_visitation(toy.mdp, pi));
  toy.alpha.alpha.assign(K, 1.0 / K);
  toy.mu_tilde = realized_mixture(toy.oracle, toy.alpha);
  toy.mu_hat = toy.mu_tilde;
  return toy;
}

std::vector<double> exact_ratio_prev(const Toy& toy, int target, int h_prev) {
  // ratio with mu_tilde * ratio = d exactly.
  const auto& d = toy.oracle[target].steps[h_prev];
  const auto& mu = toy.mu_tilde.steps[h_prev];
  std::vector<double> ratio(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) ratio[i] = d[i] / mu[i];
  return ratio;
}

/// Expectation of the stochastic gradient by enumerating the whole sample
/// space of the two independent draws.
std::vector<double> exhaustive_gradient_mean(const Toy& toy, const IdesProblem& prob, int h,
                                             std::span<const double> w,
                                             std::span<const double> ratio_prev) {
  const int S = toy.mdp.num_states, A = toy.mdp.num_actions;
  std::vector<double> mean(w.size(), 0.0);
  double total_prob = 0.0;
  for (int s1 = 0; s1 < S; ++s1)
    for (int a1 = 0; a1 < A; ++a1) {
      const double p1 = toy.mu_tilde.at(h, s1, a1);
      if (p1 == 0.0) continue;
      auto accumulate = [&](double p2, const SgdSample& sample) {
        if (p2 == 0.0) return;
        const auto g = stochastic_gradient(prob, h, w, ratio_prev, sample);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p1 * p2 * g[i];
        total_prob += p1 * p2;
      };
      if (h == 0) {
        for (int s2 = 0; s2 < S; ++s2)
          accumulate(toy.mdp.initial_dist[s2], SgdSample{s1, a1, 0, 0, s2});
      } else {
        for (int sp = 0; sp < S; ++sp)
          for (int ap = 0; ap < A; ++ap) {
            const double pp = toy.mu_tilde.at(h - 1, sp, ap);
            if (pp == 0.0) continue;
            for (int sn = 0; sn < S; ++sn)
              accumulate(pp * toy.mdp.transition(h - 1, sp, ap, sn),
                         SgdSample{s1, a1, sp, ap, sn});
          }
      }
    }
  CHECK(std::abs(total_prob - 1.0) < 1e-9);
  return mean;
}

}  // namespace

TEST_CASE("loss vanishes at w = 0") {
  const Toy toy = make_toy(301);
  const IdesProblem prob{&toy.mdp, &toy.policies[0], &toy.oracle[0], &toy.mu_hat};
  const std::vector<double> w(toy.mdp.sa(), 0.0);
  const auto ratio = exact_ratio_prev(toy, 0, 0);
  CHECK(exact_loss(prob, toy.mu_tilde, 1, w, ratio) == doctest::Approx(0.0));
  CHECK(exact_loss(prob, toy.mu_tilde, 1, w, ratio) <= 0.0);
}

TEST_CASE("single-coordinate minimizer is mu_hat with loss -mu_hat/2") {
  // One state, one action: the true occupancy is 1, the reference is 0.9.
  Toy toy;
  toy.mdp = single_path_mdp(1);
  toy.policies = {single_action_policy(toy.mdp)};
  toy.oracle = {exact_visitation(toy.mdp, toy.policies[0])};
  toy.alpha.alpha = {1.0};
  toy.mu_tilde = toy.oracle[0];
  toy.mu_hat = VisitationTable::zeros(1, 1, 1);
  toy.mu_hat.at(0, 0, 0) = 0.9;
  VisitationTable d_hat = toy.mu_hat;  // coarse estimate 0.9 of the true 1

  const IdesProblem prob{&toy.mdp, &toy.policies[0], &d_hat, &toy.mu_hat};
  const std::vector<double> empty;
  double best_w = 0.0, best_loss = 1e9;
  for (int i = 0; i <= 20000; ++i) {
    const double w = 2.0 * d_hat.at(0, 0, 0) * i / 20000.0;
    const std::vector<double> wv{w};
    const double loss = exact_loss(prob, toy.mu_tilde, 0, wv, empty);
    if (loss < best_loss) {
      best_loss = loss;
      best_w = w;
    }
  }
  CHECK(best_w == doctest::Approx(0.9).epsilon(1e-3));
  CHECK(best_loss == doctest::Approx(-0.45).epsilon(1e-6));
}

TEST_CASE("gradient vanishes at the stationary point given an exact predecessor") {
  const Toy toy = make_toy(311);
  const IdesProblem prob{&toy.mdp, &toy.policies[0], &toy.oracle[0], &toy.mu_hat};
  const int h = 1;
  const auto ratio = exact_ratio_prev(toy, 0, 0);
  std::vector<double> w_star(toy.mdp.sa(), 0.0);
  for (int i = 0; i < toy.mdp.sa(); ++i) {
    const double mu = toy.mu_tilde.steps[h][i];
    if (mu > 0.0) w_star[i] = toy.oracle[0].steps[h][i] * toy.mu_hat.steps[h][i] / mu;
  }
  const auto grad = exact_loss_gradient(prob, toy.mu_tilde, h, w_star, ratio);
  for (double g : grad) CHECK(std::abs(g) < 1e-9);

  const auto mean = exhaustive_gradient_mean(toy, prob, h, w_star, ratio);
  for (double g : mean) CHECK(std::abs(g) < 1e-9);
}

TEST_CASE("stochastic gradient is unbiased on an exhaustively enumerable toy") {
  const Toy toy = make_toy(313);
  const IdesProblem prob{&toy.mdp, &toy.policies[0], &toy.oracle[0], &toy.mu_hat};
  RngStream rng(1, 0);
  for (int h = 0; h < 2; ++h) {
    const auto ratio = h == 0 ? std::vector<double>{} : exact_ratio_prev(toy, 0, 0);
    std::vector<double> w(toy.mdp.sa());
    for (double& v : w) v = rng.next_double() * 0.5;
    const auto mean = exhaustive_gradient_mean(toy, prob, h, w, ratio);
    const auto exact = exact_loss_gradient(prob, toy.mu_tilde, h, w, ratio);
    for (std::size_t i = 0; i < mean.size(); ++i) CHECK(std::abs(mean[i] - exact[i]) < 1e-9);
  }
}

TEST_CASE("stochastic gradient second moment is within the variance bound") {
  const Toy toy = make_toy(317);
  const IdesProblem prob{&toy.mdp, &toy.policies[0], &toy.oracle[0], &toy.mu_hat};
  const int h = 1;
  const auto ratio = exact_ratio_prev(toy, 0, 0);
  RngStream rng(2, 0);
  std::vector<double> w(toy.mdp.sa());
  for (int i = 0; i < toy.mdp.sa(); ++i)
    w[i] = rng.next_double() * 2.0 * toy.oracle[0].steps[h][i];

  const int S = toy.mdp.num_states, A = toy.mdp.num_actions;
  double second_moment = 0.0;
  for (int s1 = 0; s1 < S; ++s1)
    for (int a1 = 0; a1 < A; ++a1) {
      const double p1 = toy.mu_tilde.at(h, s1, a1);
      if (p1 == 0.0) continue;
      for (int sp = 0; sp < S; ++sp)
        for (int ap = 0; ap < A; ++ap) {
          const double pp = toy.mu_tilde.at(h - 1, sp, ap);
          if (pp == 0.0) continue;
          for (int sn = 0; sn < S; ++sn) {
            const double p2 = pp * toy.mdp.transition(h - 1, sp, ap, sn);
            if (p2 == 0.0) continue;
            const auto g =
                stochastic_gradient(prob, h, w, ratio, SgdSample{s1, a1, sp, ap, sn});
            double norm_sq = 0.0;
            for (double v : g) norm_sq += v * v;
            second_moment += p1 * p2 * norm_sq;
          }
        }
    }

  double bound = 0.0;
  for (int i = 0; i < S * A; ++i) {
    const double mu = toy.mu_hat.steps[h][i];
    if (mu > 0.0) bound += toy.mu_tilde.steps[h][i] * (w[i] / mu) * (w[i] / mu);
    bound += toy.mu_tilde.steps[h - 1][i] * ratio[i] * ratio[i];
  }
  CHECK(second_moment <= bound + 1e-9);
}

TEST_CASE("loss raises on positive weight over a zero reference") {
  Toy toy = make_toy(319);
  toy.mu_hat.steps[1][0] = 0.0;
  const IdesProblem prob{&toy.mdp, &toy.policies[0], &toy.oracle[0], &toy.mu_hat};
  std::vector<double> w(toy.mdp.sa(), 0.1);
  const auto ratio = exact_ratio_prev(toy, 0, 0);
  CHECK_THROWS_AS(exact_loss(prob, toy.mu_tilde, 1, w, ratio), std::domain_error);
}

TEST_CASE("empty feasible set collapses the iterate to zero") {
  Toy toy = make_toy(331);
  VisitationTable d_zero = VisitationTable::zeros(2, 2, 2);
  const IdesProblem prob{&toy.mdp, &toy.policies[0], &d_zero, &toy.mu_hat};
  RngStream rng(3, 0);
  auto sampler = [&]() {
    SgdSample s;
    s.s_h = static_cast<int>(rng.next_u64() % 2);
    s.a_h = static_cast<int>(rng.next_u64() % 2);
    s.s_next = static_cast<int>(rng.next_u64() % 2);
    return s;
  };
  const auto w = sgd_minimize_step(prob, 0, 500, {}, sampler, IdesConfig{});
  for (double v : w) CHECK(v == 0.0);
}

TEST_CASE("sgd loss improves in expectation when iterations double") {
  const Toy toy = make_toy(337);
  const IdesProblem prob{&toy.mdp, &toy.policies[0], &toy.oracle[0], &toy.mu_hat};
  const int h = 0;
  IdesConfig cfg;

  auto mean_loss = [&](std::uint64_t iters, std::uint64_t seed_base) {
    double total = 0.0;
    const int seeds = 30;
    for (int seed = 0; seed < seeds; ++seed) {
      RngStream rng(seed_base + seed, 0);
      auto sampler = [&]() {
        SgdSample s;
        // Direct draws from the exact step and initial distributions.
        const int sa1 = rng.categorical(toy.mu_tilde.steps[h]);
        s.s_h = sa1 / toy.mdp.num_actions;
        s.a_h = sa1 % toy.mdp.num_actions;
        s.s_next = rng.categorical(toy.mdp.initial_dist);
        return s;
      };
      const auto w = sgd_minimize_step(prob, h, iters, {}, sampler, cfg);
      total += exact_loss(prob, toy.mu_tilde, h, w, {});
    }
    return total / seeds;
  };

  const double loss_n = mean_loss(200, 1000);
  const double loss_2n = mean_loss(400, 2000);
  CHECK(loss_2n <= loss_n + 1e-4);
}

TEST_CASE("single-target pipeline drives the ratio to one on the support") {
  // K = 1: the sampling mixture equals the target visitation.
  const TabularMdp mdp = gen_random_mdp(3, 2, 3, {}, 341);
  const PolicyTable pi = gen_random_policy(3, 2, 3, 342);
  const VisitationTable oracle = exact_visitation(mdp, pi);
  const double epsilon = 0.2;

  const int seeds = 5;
  std::vector<double> err_sum(mdp.horizon, 0.0);
  for (int seed = 0; seed < seeds; ++seed) {
    Simulator sim(mdp);
    RngStream rng(400 + seed, 0);
    CoarseConfig cc;
    cc.epsilon = epsilon / (14.0 * mdp.sa());
    cc.delta = 0.1;
    cc.c_univ = TheoryConstants::calibrated().coarse_c;
    RngStream coarse_rng = rng.substream(1);
    const CoarseVisitation coarse =
        threshold_low_mass(coarse_estimate(sim, pi, cc, coarse_rng), epsilon);

    const auto sol = solve_alpha(SamplingObjective::from_tables({coarse.table}));
    IdesConfig ic;
    ic.epsilon = epsilon;
    ic.delta = 0.1;
    ic.c_h = TheoryConstants::calibrated().ides_c_h;
    ic.mom_reps = 1;
    const ImportanceWeightTable w =
        run_ides(sim, pi, coarse, {&pi, 1}, sol.alpha, sol.mu_hat, ic, rng.substream(2));

    // Ratios near one wherever the coarse support survived.
    for (int h = 0; h < mdp.horizon; ++h)
      for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a)
          if (coarse.table.at(h, s, a) > 0.05)
            CHECK(w.ratio(h, s, a) == doctest::Approx(1.0).epsilon(0.35));

    const VisitationTable masked = mask_to_support(oracle, coarse);
    const VisitationTable mu_tilde =
        realized_mixture_on_support({&oracle, 1}, sol.alpha, {&coarse, 1});
    const auto err = density_l1_error(w, mu_tilde, masked);
    for (int h = 0; h < mdp.horizon; ++h) err_sum[h] += err[h];
  }
  for (int h = 0; h < mdp.horizon; ++h)
    CHECK(err_sum[h] / seeds <= epsilon / (4.0 * mdp.horizon));
}

TEST_CASE("projection keeps every output within the feasible box") {
  const TabularMdp mdp = gen_random_mdp(3, 2, 2, {}, 351);
  std::vector<PolicyTable> targets{gen_random_policy(3, 2, 2, 352),
                                   gen_random_policy(3, 2, 2, 353)};
  Simulator sim(mdp);
  RngStream rng(5, 0);
  CoarseConfig cc;
  cc.epsilon = 0.01;
  cc.delta = 0.1;
  cc.c_univ = 2.0;
  std::vector<CoarseVisitation> coarse;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    RngStream policy_rng = rng.substream(10 + k);
    coarse.push_back(threshold_low_mass(coarse_estimate(sim, targets[k], cc, policy_rng), 0.2));
  }
  std::vector<VisitationTable> tables{coarse[0].table, coarse[1].table};
  const auto sol = solve_alpha(SamplingObjective::from_tables(tables));

  IdesConfig ic;
  ic.epsilon = 0.3;
  ic.delta = 0.2;
  ic.c_h = 0.5;
  ic.mom_reps = 2;
  const IdesOutput out =
      run_ides(sim, targets, coarse, targets, sol.alpha, sol.mu_hat, ic, rng.substream(30));
  for (std::size_t k = 0; k < targets.size(); ++k)
    for (int h = 0; h < mdp.horizon; ++h)
      for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a)
          CHECK(out.weights[k].w.at(h, s, a) <= 2.0 * coarse[k].table.at(h, s, a) + 1e-12);
}

TEST_CASE("iteration counts scale as horizon to the fifth across the step loop") {
  auto flat_problem = [](int H) {
    Toy toy;
    toy.mdp = single_path_mdp(H);
    toy.policies = {single_action_policy(toy.mdp)};
    toy.oracle = {exact_visitation(toy.mdp, toy.policies[0])};
    toy.mu_tilde = toy.oracle[0];
    toy.mu_hat = toy.oracle[0];
    return toy;
  };
  IdesConfig cfg;
  cfg.epsilon = 0.1;
  cfg.step_iter_cap = 1ULL << 62;
  auto total = [&](int H) {
    const Toy toy = flat_problem(H);
    const IdesProblem prob{&toy.mdp, &toy.policies[0], &toy.oracle[0], &toy.mu_hat};
    double sum = 0.0;
    for (int h = 0; h < H; ++h)
      sum += static_cast<double>(ides_iteration_count(prob, h, cfg));
    return sum;
  };
  const double ratio = total(4) / total(2);
  CHECK(ratio == doctest::Approx(32.0).epsilon(0.1));
}

TEST_CASE("H = 1 reduces to a single quadratic fit") {
  const TabularMdp mdp = gen_random_mdp(3, 2, 1, {}, 361);
  const PolicyTable pi = gen_random_policy(3, 2, 1, 362);
  Simulator sim(mdp);
  RngStream rng(6, 0);
  CoarseConfig cc;
  cc.epsilon = 0.01;
  cc.delta = 0.1;
  cc.c_univ = 4.0;
  RngStream coarse_rng = rng.substream(1);
  const CoarseVisitation coarse =
      threshold_low_mass(coarse_estimate(sim, pi, cc, coarse_rng), 0.2);
  const auto sol = solve_alpha(SamplingObjective::from_tables({coarse.table}));
  IdesConfig ic;
  ic.epsilon = 0.2;
  ic.delta = 0.1;
  ic.c_h = 1.0;
  ic.mom_reps = 1;
  const ImportanceWeightTable w =
      run_ides(sim, pi, coarse, {&pi, 1}, sol.alpha, sol.mu_hat, ic, rng.substream(2));
  const VisitationTable oracle = exact_visitation(mdp, pi);
  const VisitationTable mu_tilde =
      realized_mixture_on_support({&oracle, 1}, sol.alpha, {&coarse, 1});
  const auto err = density_l1_error(w, mu_tilde, mask_to_support(oracle, coarse));
  CHECK(err[0] <= 0.05);
}

TEST_CASE("median selection picks the run with the median loss") {
  CHECK(mom_select_index(std::vector<double>{-0.4}) == 0);
  CHECK(mom_select_index(std::vector<double>{-0.9, -0.5, -0.1}) == 1);
  CHECK(mom_select_index(std::vector<double>{-0.1, -0.9, -0.5}) == 2);
  // Lower median for even counts.
  CHECK(mom_select_index(std::vector<double>{-0.8, -0.6, -0.4, -0.2}) == 1);
}

TEST_CASE("median of heavy-tailed repetitions lands within epsilon") {
  // Synthetic check of the in-expectation-to-high-probability conversion.
  const double epsilon = 0.2;
  const double delta = 0.1;
  const int reps = static_cast<int>(std::ceil(8.0 * std::log(1.0 / delta)));
  RngStream rng(77, 0);
  int ok = 0;
  const int trials = 2000;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> estimates(reps);
    for (int i = 0; i < reps; ++i) {
      // |err| has mean eps/4 and a Pareto-like tail.
      const double u = std::max(rng.next_double(), 1e-12);
      const double err = (epsilon / 4.0) * std::pow(u, -2.0 / 3.0) / 3.0;
      estimates[i] = (rng.next_double() < 0.5 ? -err : err);
    }
    std::vector<double> pseudo_losses(reps);
    for (int i = 0; i < reps; ++i) pseudo_losses[i] = estimates[i];
    const double median = estimates[mom_select_index(pseudo_losses)];
    if (std::abs(median) <= epsilon) ++ok;
  }
  CHECK(ok >= static_cast<int>((1.0 - delta - 0.02) * trials));
}

TEST_CASE("exact-gradient error propagation stays within the additive budget") {
  const Toy toy = make_toy(371);
  const IdesProblem prob{&toy.mdp, &toy.policies[0], &toy.oracle[0], &toy.mu_hat};
  const int h = 1;
  const double e = 0.02;

  // Previous-step ratio with L1 density error exactly e.
  std::vector<double> ratio = exact_ratio_prev(toy, 0, 0);
  int bump = -1;
  for (int i = 0; i < toy.mdp.sa(); ++i)
    if (toy.mu_tilde.steps[0][i] > 0.1) {
      bump = i;
      break;
    }
  REQUIRE(bump >= 0);
  ratio[bump] += e / toy.mu_tilde.steps[0][bump];

  // Minimizer under the perturbed predecessor, then a gradient-e perturbation.
  std::vector<double> t(toy.mdp.sa(), 0.0);
  {
    std::vector<double> w0(toy.mdp.sa(), 0.0);
    const auto g0 = exact_loss_gradient(prob, toy.mu_tilde, h, w0, ratio);
    for (int i = 0; i < toy.mdp.sa(); ++i) t[i] = -g0[i];  // gradient at 0 is -T
  }
  std::vector<double> w(toy.mdp.sa(), 0.0);
  for (int i = 0; i < toy.mdp.sa(); ++i) {
    const double mu = toy.mu_tilde.steps[h][i];
    if (mu > 0.0) w[i] = t[i] * toy.mu_hat.steps[h][i] / mu;
  }
  int bump_h = -1;
  for (int i = 0; i < toy.mdp.sa(); ++i)
    if (toy.mu_tilde.steps[h][i] > 0.1) {
      bump_h = i;
      break;
    }
  REQUIRE(bump_h >= 0);
  w[bump_h] += e * toy.mu_hat.steps[h][bump_h] / toy.mu_tilde.steps[h][bump_h];

  const auto grad = exact_loss_gradient(prob, toy.mu_tilde, h, w, ratio);
  double grad_l1 = 0.0;
  for (double g : grad) grad_l1 += std::abs(g);
  CHECK(grad_l1 == doctest::Approx(e).epsilon(1e-9));

  double density_err = 0.0;
  for (int i = 0; i < toy.mdp.sa(); ++i) {
    const double mu = toy.mu_hat.steps[h][i];
    const double est = mu > 0.0 ? toy.mu_tilde.steps[h][i] * w[i] / mu : 0.0;
    density_err += std::abs(est - toy.oracle[0].steps[h][i]);
  }
  CHECK(density_err <= 2.0 * e + 1e-12);
}
