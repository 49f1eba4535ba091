#include "caesar/march.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace caesar {

void BetaDistanceParams::require_valid() const {
  if (beta < 1.0) throw std::invalid_argument("beta must be >= 1");
}

double beta_dist(double x, double y, double beta) {
  if (x < 0.0 || y < 0.0) throw std::invalid_argument("beta_dist: negative input");
  if (beta < 1.0) throw std::invalid_argument("beta_dist: beta must be >= 1");
  const double lo = x / beta, hi = beta * x;
  if (y > hi) return y - hi;
  if (y < lo) return lo - y;
  return 0.0;
}

double beta_dist_vec(std::span<const double> x, std::span<const double> y, double beta) {
  if (x.size() != y.size()) throw std::invalid_argument("beta_dist_vec: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += beta_dist(x[i], y[i], beta);
  return acc;
}

void MarchConfig::require_valid() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
  if (c_univ <= 0.0) throw std::invalid_argument("c_univ must be positive");
}

CoverDistribution build_cover(const TabularMdp& mdp, CoverMode mode, double epsilon,
                              std::uint64_t cap) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  CoverDistribution cover;

  const std::vector<PolicyTable> all = enumerate_deterministic_policies(mdp, cap);
  std::vector<VisitationTable> tables;
  tables.reserve(all.size());
  for (const auto& pi : all) tables.push_back(exact_visitation(mdp, pi));

  VisitationTable d_max = VisitationTable::zeros(H, S, A);
  for (const auto& t : tables)
    for (int h = 0; h < H; ++h)
      for (std::size_t i = 0; i < t.steps[h].size(); ++i)
        d_max.steps[h][i] = std::max(d_max.steps[h][i], t.steps[h][i]);

  if (mode == CoverMode::oracle_cover) {
    cover.provenance = "oracle-cover";
    std::map<std::size_t, int> picks;  // policy index -> multiplicity
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          std::size_t best = 0;
          for (std::size_t k = 1; k < tables.size(); ++k)
            if (tables[k].at(h, s, a) > tables[best].at(h, s, a)) best = k;
          ++picks[best];
        }
    const double total = static_cast<double>(H) * S * A;
    for (const auto& [idx, count] : picks) {
      cover.policies.push_back(all[idx]);
      cover.weights.alpha.push_back(count / total);
    }
  } else {
    cover.provenance = "uniform-mixture";
    PolicyTable uniform;
    uniform.horizon = H;
    uniform.num_states = S;
    uniform.num_actions = A;
    uniform.table.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 1.0 / A));
    cover.policies.push_back(std::move(uniform));
    cover.weights.alpha = {1.0};
  }

  std::vector<VisitationTable> cover_tables;
  for (const auto& pi : cover.policies) cover_tables.push_back(exact_visitation(mdp, pi));
  cover.occupancy = VisitationTable::zeros(H, S, A);
  for (std::size_t k = 0; k < cover_tables.size(); ++k)
    for (int h = 0; h < H; ++h)
      for (std::size_t i = 0; i < cover.occupancy.steps[h].size(); ++i)
        cover.occupancy.steps[h][i] += cover.weights.alpha[k] * cover_tables[k].steps[h][i];

  // Coverage bound wherever the best reachable state mass is at least eps/(S*A).
  const double reach_floor = epsilon / (S * A);
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s) {
      double d_max_state = 0.0;
      for (int a = 0; a < A; ++a) d_max_state += d_max.at(h, s, a);
      if (d_max_state < reach_floor) continue;
      for (int a = 0; a < A; ++a) {
        const double required = d_max.at(h, s, a) / (2.0 * H * S * A);
        if (cover.occupancy.at(h, s, a) + 1e-15 < required) {
          cover.coverage_ok = false;
          cover.violations.push_back({h, s, a, cover.occupancy.at(h, s, a), required});
        }
      }
    }
  return cover;
}

MarchData march_collect(Simulator& sim, const CoverDistribution& cover, const MarchConfig& cfg,
                        RngStream rng) {
  cfg.require_valid();
  const TabularMdp& mdp = sim.mdp();
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  const std::uint64_t start = sim.trajectories();
  const double beta = 1.0 / H;      // per-layer multiplicative slack
  const double c_div = 2.0 / beta;  // coarse divisor achieving |err| <= beta/2 * value

  // One failure event per batch: the initial batch plus two per layer.
  const double delta_each = cfg.delta / (2.0 * H);

  MarchData data;
  data.num_states = S;
  data.num_actions = A;
  data.horizon = H;
  data.epsilon = cfg.epsilon;
  data.clip_bound = 2.0 * H * S * A;

  auto batch_size = [&](double eps_add, double weight_bound) {
    CoarseConfig c;
    c.epsilon = eps_add;
    c.delta = delta_each;
    c.c_mult = c_div;
    c.c_univ = cfg.c_univ * std::max(weight_bound, 1.0);
    return std::min<std::uint64_t>(coarse_sample_size(c, 1), cfg.layer_batch_cap);
  };

  // Initial-state estimate: additive budget eps/S per state.
  {
    const std::uint64_t n = batch_size(cfg.epsilon / S, 1.0);
    data.nu_hat.assign(S, 0.0);
    RngStream nu_rng = rng.substream(0);
    for (std::uint64_t i = 0; i < n; ++i) {
      const Trajectory t = sim.rollout_mixture_prefix(cover.policies, cover.weights, 1, nu_rng);
      data.nu_hat[t.states[0]] += 1.0;
    }
    for (double& v : data.nu_hat) v /= static_cast<double>(n);
  }

  data.mu_hat.resize(std::max(H - 1, 0));
  data.batches.resize(std::max(H - 1, 0));
  const double eps_mu = cfg.epsilon / (2.0 * H * H * S * S * A * A);
  const double eps_d = cfg.epsilon / (S * A);
  for (int h = 0; h + 1 < H; ++h) {
    {
      const std::uint64_t n = batch_size(eps_mu, 1.0);
      data.mu_hat[h].assign(static_cast<std::size_t>(S) * A, 0.0);
      RngStream mu_rng = rng.substream(2 * h + 1);
      for (std::uint64_t i = 0; i < n; ++i) {
        const Trajectory t =
            sim.rollout_mixture_prefix(cover.policies, cover.weights, h + 1, mu_rng);
        data.mu_hat[h][static_cast<std::size_t>(t.states[h]) * A + t.actions[h]] += 1.0;
      }
      for (double& v : data.mu_hat[h]) v /= static_cast<double>(n);
    }
    {
      const std::uint64_t n = batch_size(eps_d, data.clip_bound);
      data.batches[h].reserve(n);
      RngStream d_rng = rng.substream(2 * h + 2);
      for (std::uint64_t i = 0; i < n; ++i) {
        const Trajectory t =
            sim.rollout_mixture_prefix(cover.policies, cover.weights, h + 2, d_rng);
        data.batches[h].push_back({t.states[h], t.actions[h], t.states[h + 1]});
      }
    }
  }
  data.trajectories = sim.trajectories() - start;
  return data;
}

CoarseVisitation march_estimate(const MarchData& data, const PolicyTable& policy) {
  const int S = data.num_states, A = data.num_actions, H = data.horizon;
  if (policy.horizon != H || policy.num_states != S || policy.num_actions != A)
    throw std::invalid_argument("march_estimate: policy shape mismatch");

  CoarseVisitation est;
  est.table = VisitationTable::zeros(H, S, A);
  est.epsilon_used = data.epsilon;

  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) est.table.at(0, s, a) = data.nu_hat[s] * policy.prob(0, s, a);

  std::vector<double> w(static_cast<std::size_t>(S) * A, 0.0);
  for (int h = 0; h + 1 < H; ++h) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const std::size_t c = static_cast<std::size_t>(s) * A + a;
        const double d = est.table.steps[h][c];
        if (d == 0.0) {
          w[c] = 0.0;
        } else if (data.mu_hat[h][c] <= 0.0) {
          w[c] = -1.0;  // visited by the policy but unseen in the cover estimate
        } else {
          w[c] = std::min(d / data.mu_hat[h][c], data.clip_bound);
        }
      }
    auto& next = est.table.steps[h + 1];
    std::fill(next.begin(), next.end(), 0.0);
    const auto& batch = data.batches[h];
    for (const auto& triple : batch) {
      const std::size_t c = static_cast<std::size_t>(triple.s) * A + triple.a;
      const double weight = w[c];
      if (weight == 0.0) continue;
      if (weight < 0.0) throw CoverSupportViolation(h, triple.s, triple.a);
      for (int a = 0; a < A; ++a) {
        const double pi_a = policy.prob(h + 1, triple.s_next, a);
        if (pi_a > 0.0)
          next[static_cast<std::size_t>(triple.s_next) * A + a] += weight * pi_a;
      }
    }
    const double unit = 1.0 / static_cast<double>(batch.size());
    for (double& v : next) v *= unit;
  }
  return est;
}

CoarseVisitation march_estimate(const TabularMdp& mdp, const CoverDistribution& cover,
                                const PolicyTable& policy, double epsilon, RngStream& rng,
                                const MarchConfig* cfg) {
  MarchConfig config = cfg ? *cfg : MarchConfig{};
  config.epsilon = epsilon;
  Simulator sim(mdp);
  const MarchData data = march_collect(sim, cover, config, rng.substream(0x4d41));
  return march_estimate(data, policy);
}

BetaDiagnostic beta_dist_diagnostic(const CoarseVisitation& d_hat,
                                    const VisitationTable& d_oracle, double epsilon) {
  const double e2 = std::exp(2.0);
  BetaDiagnostic diag;
  diag.bound = d_oracle.horizon * (1.0 + e2) * epsilon;
  diag.per_step.resize(d_oracle.horizon, 0.0);
  for (int h = 0; h < d_oracle.horizon; ++h)
    diag.per_step[h] = beta_dist_vec(d_hat.table.steps[h], d_oracle.steps[h], e2);
  return diag;
}

}  // namespace caesar
