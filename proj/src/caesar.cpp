#include "caesar/caesar.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace caesar {

namespace {

constexpr std::uint64_t kCoarsePhase = 1;
constexpr std::uint64_t kIdesPhase = 2;
constexpr std::uint64_t kFinalPhase = 3;
constexpr std::uint64_t kMcPhase = 4;

bool oracle_affordable(const TabularMdp& mdp) {
  return static_cast<long long>(mdp.num_states) * mdp.num_actions * mdp.horizon <= 10000;
}

std::vector<double> oracle_values(const TabularMdp& mdp, std::span<const PolicyTable> targets) {
  std::vector<double> v;
  v.reserve(targets.size());
  for (const auto& pi : targets) v.push_back(exact_value(mdp, pi));
  return v;
}

}  // namespace

TheoryConstants TheoryConstants::calibrated() {
  // Smallest constants passing the reference calibration suite
  // (harness::calibrate_constants with its default configuration).
  TheoryConstants c;
  c.coarse_c = 4.0;
  c.ides_c_h = 1.0;
  c.bernstein = 1.0;
  c.march_c = 2.0;
  return c;
}

std::vector<double> final_estimator(std::span<const ImportanceWeightTable> weights,
                                    std::span<const Trajectory> batch) {
  std::vector<double> estimates(weights.size(), 0.0);
  if (batch.empty()) return estimates;
  for (const auto& traj : batch) {
    for (int h = 0; h < traj.length(); ++h) {
      const double r = traj.rewards[h];
      if (r == 0.0) continue;
      for (std::size_t k = 0; k < weights.size(); ++k)
        estimates[k] += weights[k].ratio(h, traj.states[h], traj.actions[h]) * r;
    }
  }
  for (double& v : estimates) v /= static_cast<double>(batch.size());
  return estimates;
}

std::vector<double> final_estimator_with_rewards(
    std::span<const ImportanceWeightTable> weights, std::span<const Trajectory> batch,
    const std::vector<std::vector<double>>& reward_tables) {
  std::vector<double> estimates(weights.size(), 0.0);
  if (batch.empty()) return estimates;
  for (const auto& traj : batch) {
    for (int h = 0; h < traj.length(); ++h) {
      const int s = traj.states[h], a = traj.actions[h];
      const double r = reward_tables[h][static_cast<std::size_t>(s) *
                                            weights[0].w.num_actions +
                                        a];
      if (r == 0.0) continue;
      for (std::size_t k = 0; k < weights.size(); ++k)
        estimates[k] += weights[k].ratio(h, s, a) * r;
    }
  }
  for (double& v : estimates) v /= static_cast<double>(batch.size());
  return estimates;
}

std::uint64_t final_sample_size(std::span<const CoarseVisitation> d_hats,
                                const VisitationTable& mu_hat, const TabularMdp& mdp,
                                double epsilon, double delta) {
  if (d_hats.empty()) throw std::invalid_argument("final_sample_size: no targets");
  const int H = mu_hat.horizon;
  const int K = static_cast<int>(d_hats.size());

  double rho = 0.0;
  double weight_reward_bound = 0.0;
  for (int h = 0; h < H; ++h) {
    double worst = 0.0;
    for (const auto& d : d_hats) {
      double acc = 0.0;
      for (std::size_t i = 0; i < mu_hat.steps[h].size(); ++i) {
        const double dh = d.table.steps[h][i];
        if (dh > 0.0) acc += dh * dh / mu_hat.steps[h][i];
      }
      worst = std::max(worst, acc);
    }
    rho += worst;

    double step_bound = 0.0;
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double mu = mu_hat.at(h, s, a);
        if (mu <= 0.0) continue;
        double dmax = 0.0;
        for (const auto& d : d_hats) dmax = std::max(dmax, d.table.at(h, s, a));
        step_bound = std::max(step_bound, 2.0 * dmax / mu * mdp.reward(h, s, a));
      }
    weight_reward_bound += step_bound;
  }

  const double log_term = std::log(2.0 * K / delta);
  const double n = 8.0 * H * rho * log_term / (epsilon * epsilon) +
                   4.0 * weight_reward_bound * log_term / (3.0 * epsilon);
  return static_cast<std::uint64_t>(std::ceil(std::max(n, 1.0)));
}

std::uint64_t mc_sample_size(double epsilon, double delta, int horizon, int k_policies) {
  const double h = static_cast<double>(horizon);
  const double n = h * h * std::log(2.0 * k_policies / delta) / (2.0 * epsilon * epsilon);
  return static_cast<std::uint64_t>(std::ceil(std::max(n, 1.0)));
}

CaesarOutput run_caesar(const TabularMdp& mdp, std::span<const PolicyTable> targets,
                        const CaesarConfig& cfg, RngStream rng) {
  if (targets.empty()) throw std::invalid_argument("run_caesar: no target policies");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0 && cfg.delta > 0.0 && cfg.delta < 1.0))
    throw std::invalid_argument("run_caesar: epsilon and delta must be in (0,1)");
  require_valid(mdp);
  for (const auto& pi : targets) require_valid(mdp, pi);

  const int K = static_cast<int>(targets.size());
  const TheoryConstants constants = cfg.resolve_constants();

  CaesarOutput out;
  out.report.mode = "caesar";
  out.report.epsilon = cfg.epsilon;
  out.report.delta = cfg.delta;
  out.report.seed = rng.seed();
  out.report.constants_used = constants;
  out.report.coarse_streams = {kCoarsePhase};
  out.report.ides_streams = {kIdesPhase};
  out.report.final_streams = {kFinalPhase};

  Simulator sim(mdp);

  // --- Phase I: coarse estimation, thresholding --------------------------
  const double eps_entry = cfg.epsilon / (14.0 * mdp.sa());
  CoarseConfig coarse_cfg;
  coarse_cfg.epsilon = eps_entry;
  coarse_cfg.delta = cfg.delta * cfg.delta_coarse_frac;
  coarse_cfg.c_univ = constants.coarse_c;
  const std::uint64_t n_total = coarse_sample_size(coarse_cfg, K);
  const std::uint64_t n_per_policy = (n_total + K - 1) / K;

  if (n_per_policy * K > cfg.budget_cap) {
    out.report.budget_exceeded = true;
    return out;
  }

  RngStream coarse_rng = rng.substream(kCoarsePhase);
  for (int k = 0; k < K; ++k) {
    RngStream policy_rng = coarse_rng.substream(static_cast<std::uint64_t>(k));
    CoarseVisitation est = coarse_estimate(sim, targets[k], coarse_cfg, policy_rng, n_per_policy);
    out.coarse.push_back(threshold_low_mass(est, cfg.epsilon));
  }
  out.report.phases.coarse = sim.trajectories();

  // --- Solve the sampling-distribution problem ----------------------------
  std::vector<VisitationTable> tables;
  tables.reserve(K);
  for (const auto& c : out.coarse) tables.push_back(c.table);
  try {
    out.solution = solve_alpha(SamplingObjective::from_tables(std::move(tables)));
  } catch (const SolverNonConvergence& e) {
    out.solution = e.best;
    out.report.solver_converged = false;
  }

  // --- Phase II: importance-density estimation ----------------------------
  IdesConfig ides_cfg;
  ides_cfg.epsilon = cfg.epsilon;
  ides_cfg.delta = cfg.delta * cfg.delta_ides_frac;
  ides_cfg.c_h = constants.ides_c_h;
  ides_cfg.mom_reps = cfg.mom_reps_override;
  ides_cfg.trace_stride = cfg.trace_stride;

  {
    // Projected cost: two rollouts per iteration plus the held-out batches.
    std::uint64_t projected = 0;
    const int reps = mom_rep_count(ides_cfg);
    for (int h = 0; h < mdp.horizon; ++h) {
      std::uint64_t n_max = 0;
      for (int k = 0; k < K; ++k) {
        IdesProblem prob{&mdp, &targets[k], &out.coarse[k].table, &out.solution.mu_hat};
        n_max = std::max(n_max, ides_iteration_count(prob, h, ides_cfg));
      }
      projected += reps * (2 * n_max + static_cast<std::uint64_t>(std::ceil(
                                           ides_cfg.holdout_fraction * n_max)));
    }
    if (sim.trajectories() + projected > cfg.budget_cap) {
      out.report.budget_exceeded = true;
      return out;
    }
  }

  IdesOutput ides_out =
      run_ides(sim, targets, out.coarse, targets, out.solution.alpha, out.solution.mu_hat,
               ides_cfg, rng.substream(kIdesPhase), nullptr);
  out.weights = std::move(ides_out.weights);
  out.report.iteration_capped = ides_out.iteration_capped;
  out.report.phases.ides = sim.trajectories() - out.report.phases.coarse;

  // --- Final phase: shared evaluation batch -------------------------------
  const double delta_final = cfg.delta * cfg.delta_final_frac;
  std::uint64_t n_final = final_sample_size(out.coarse, out.solution.mu_hat, mdp,
                                            cfg.epsilon / 4.0, delta_final);
  n_final = static_cast<std::uint64_t>(std::ceil(constants.bernstein * n_final));
  if (sim.trajectories() + n_final > cfg.budget_cap) {
    out.report.budget_exceeded = true;
    return out;
  }

  RngStream final_rng = rng.substream(kFinalPhase);
  out.final_batch.reserve(n_final);
  for (std::uint64_t i = 0; i < n_final; ++i)
    out.final_batch.push_back(sim.rollout_mixture_one(targets, out.solution.alpha, final_rng));
  out.report.phases.final_phase =
      sim.trajectories() - out.report.phases.coarse - out.report.phases.ides;

  out.report.estimates = final_estimator(out.weights, out.final_batch);
  if (oracle_affordable(mdp)) out.report.oracle_values = oracle_values(mdp, targets);
  return out;
}

EvaluationReport evaluate_policies(const TabularMdp& mdp, std::span<const PolicyTable> targets,
                                   const CaesarConfig& cfg, RngStream rng) {
  return run_caesar(mdp, targets, cfg, rng).report;
}

EvaluationReport mc_baseline(const TabularMdp& mdp, std::span<const PolicyTable> targets,
                             double epsilon, double delta, RngStream rng) {
  if (targets.empty()) throw std::invalid_argument("mc_baseline: no target policies");
  require_valid(mdp);
  const int K = static_cast<int>(targets.size());

  EvaluationReport report;
  report.mode = "mc";
  report.epsilon = epsilon;
  report.delta = delta;
  report.seed = rng.seed();
  report.final_streams = {kMcPhase};

  Simulator sim(mdp);
  const std::uint64_t n_per_policy = mc_sample_size(epsilon, delta, mdp.horizon, K);
  RngStream mc_rng = rng.substream(kMcPhase);
  for (int k = 0; k < K; ++k) {
    RngStream policy_rng = mc_rng.substream(static_cast<std::uint64_t>(k));
    double total = 0.0;
    for (std::uint64_t i = 0; i < n_per_policy; ++i) {
      const Trajectory traj = sim.rollout(targets[k], policy_rng);
      for (double r : traj.rewards) total += r;
    }
    report.estimates.push_back(total / static_cast<double>(n_per_policy));
  }
  report.phases.final_phase = sim.trajectories();
  if (oracle_affordable(mdp)) report.oracle_values = oracle_values(mdp, targets);
  return report;
}

double deterministic_upper_bound_check(const TabularMdp& mdp, std::uint64_t cap) {
  const std::vector<PolicyTable> policies = enumerate_deterministic_policies(mdp, cap);
  std::vector<VisitationTable> tables;
  tables.reserve(policies.size());
  for (const auto& pi : policies) tables.push_back(exact_visitation(mdp, pi));
  const SamplingObjective obj = SamplingObjective::from_tables(tables);

  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  double worst = 0.0;
  for (int h = 0; h < H; ++h) {
    // Feasible witness: uniform mixture over the per-(s,a) argmax policies.
    MixtureWeights witness;
    witness.alpha.assign(policies.size(), 0.0);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < tables.size(); ++k)
          if (tables[k].at(h, s, a) > tables[best].at(h, s, a)) best = k;
        witness.alpha[best] += 1.0 / (S * A);
      }
    double value = objective_value(obj, witness, h);
    try {
      const SamplingSolution sol = solve_alpha_per_step(obj, h);
      value = std::min(value, sol.objective_per_step[h]);
    } catch (const SolverNonConvergence& e) {
      value = std::min(value, e.best.objective_per_step[h]);
    }
    worst = std::max(worst, value);
  }
  return worst;
}

}  // namespace caesar
