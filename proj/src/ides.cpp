#include "caesar/ides.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace caesar {

namespace {

double safe_ratio(double num, double den, const char* what) {
  if (den > 0.0) return num / den;
  if (num != 0.0) throw std::domain_error(std::string(what) + ": positive mass over zero reference");
  return 0.0;
}

/// Flow term T_h(s,a): expected second gradient component. At h = 0 the
/// virtual predecessor contributes nu(s) with ratio 1.
std::vector<double> flow_term(const IdesProblem& prob, const VisitationTable& mu_tilde, int h,
                              std::span<const double> ratio_prev) {
  const TabularMdp& mdp = *prob.mdp;
  const int S = mdp.num_states, A = mdp.num_actions;
  std::vector<double> state_flow(S, 0.0);
  if (h == 0) {
    state_flow = mdp.initial_dist;
  } else {
    for (int sp = 0; sp < S; ++sp)
      for (int ap = 0; ap < A; ++ap) {
        const double mass = mu_tilde.at(h - 1, sp, ap) * ratio_prev[sp * A + ap];
        if (mass == 0.0) continue;
        for (int s = 0; s < S; ++s) state_flow[s] += mass * mdp.transition(h - 1, sp, ap, s);
      }
  }
  std::vector<double> t(static_cast<std::size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) t[s * A + a] = state_flow[s] * prob.pi->prob(h, s, a);
  return t;
}

}  // namespace

double ImportanceWeightTable::ratio(int h, int s, int a) const {
  return safe_ratio(w.at(h, s, a), mu_hat.at(h, s, a), "importance ratio");
}

void IdesConfig::require_valid() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
  if (c_h <= 0.0) throw std::invalid_argument("c_h must be positive");
  if (mom_reps < 0) throw std::invalid_argument("mom_reps must be >= 0");
  if (!(gamma_lower > 0.0)) throw std::invalid_argument("gamma_lower must be positive");
  if (!(holdout_fraction > 0.0)) throw std::invalid_argument("holdout_fraction must be positive");
}

int mom_rep_count(const IdesConfig& cfg) {
  if (cfg.mom_reps > 0) return cfg.mom_reps;
  return static_cast<int>(std::ceil(8.0 * std::log(1.0 / cfg.delta)));
}

int mom_select_index(std::span<const double> losses) {
  if (losses.empty()) throw std::invalid_argument("mom_select: no runs");
  std::vector<int> order(losses.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return losses[i] < losses[j]; });
  return order[(losses.size() - 1) / 2];
}

std::uint64_t ides_iteration_count(const IdesProblem& prob, int h, const IdesConfig& cfg) {
  cfg.require_valid();
  const VisitationTable& d = *prob.d_hat;
  const VisitationTable& mu = *prob.mu_hat;
  double rho = 0.0;
  for (std::size_t i = 0; i < d.steps[h].size(); ++i) {
    const double dh = d.steps[h][i];
    if (dh > 0.0) rho += dh * dh / mu.steps[h][i];
  }
  if (h == 0) {
    rho += 1.0;  // virtual predecessor coordinate
  } else {
    for (std::size_t i = 0; i < d.steps[h - 1].size(); ++i) {
      const double dp = d.steps[h - 1][i];
      if (dp > 0.0) rho += dp * dp / mu.steps[h - 1][i];
    }
  }
  const double hh = static_cast<double>(prob.mdp->horizon);
  const double n = cfg.c_h * (hh * hh * hh * hh) / (cfg.epsilon * cfg.epsilon) * rho;
  if (n >= static_cast<double>(cfg.step_iter_cap)) return cfg.step_iter_cap;
  return static_cast<std::uint64_t>(std::ceil(std::max(n, 1.0)));
}

double exact_loss(const IdesProblem& prob, const VisitationTable& mu_tilde, int h,
                  std::span<const double> w_h, std::span<const double> ratio_prev) {
  const VisitationTable& mu_hat = *prob.mu_hat;
  const std::vector<double> t = flow_term(prob, mu_tilde, h, ratio_prev);
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < w_h.size(); ++i) {
    if (w_h[i] != 0.0)
      quad += mu_tilde.steps[h][i] * w_h[i] *
              safe_ratio(w_h[i], mu_hat.steps[h][i], "exact_loss");
    lin += t[i] * w_h[i];
  }
  return 0.5 * quad - lin;
}

std::vector<double> exact_loss_gradient(const IdesProblem& prob, const VisitationTable& mu_tilde,
                                        int h, std::span<const double> w_h,
                                        std::span<const double> ratio_prev) {
  const VisitationTable& mu_hat = *prob.mu_hat;
  std::vector<double> g = flow_term(prob, mu_tilde, h, ratio_prev);
  for (std::size_t i = 0; i < w_h.size(); ++i) {
    double quad = 0.0;
    if (w_h[i] != 0.0)
      quad = mu_tilde.steps[h][i] * safe_ratio(w_h[i], mu_hat.steps[h][i], "exact_loss_gradient");
    g[i] = quad - g[i];
  }
  return g;
}

std::vector<double> stochastic_gradient(const IdesProblem& prob, int h,
                                        std::span<const double> w,
                                        std::span<const double> ratio_prev,
                                        const SgdSample& sample) {
  const TabularMdp& mdp = *prob.mdp;
  const int A = mdp.num_actions;
  std::vector<double> g(w.size(), 0.0);

  const std::size_t c1 = static_cast<std::size_t>(sample.s_h) * A + sample.a_h;
  if (w[c1] != 0.0)
    g[c1] += safe_ratio(w[c1], prob.mu_hat->steps[h][c1], "stochastic_gradient");

  const double prev_ratio =
      h == 0 ? 1.0 : ratio_prev[static_cast<std::size_t>(sample.s_prev) * A + sample.a_prev];
  for (int a = 0; a < A; ++a) {
    const std::size_t c = static_cast<std::size_t>(sample.s_next) * A + a;
    g[c] -= prev_ratio * prob.pi->prob(h, sample.s_next, a);
  }
  return g;
}

std::vector<double> sgd_minimize_step(const IdesProblem& prob, int h, std::uint64_t n_iters,
                                      std::span<const double> ratio_prev, const SgdSampleFn& next,
                                      const IdesConfig& cfg) {
  const TabularMdp& mdp = *prob.mdp;
  const int A = mdp.num_actions;
  const std::size_t n_coords = prob.d_hat->steps[h].size();
  const std::vector<double>& d_row = prob.d_hat->steps[h];
  const std::vector<double>& mu_row = prob.mu_hat->steps[h];

  std::vector<double> w(n_coords, 0.0);
  std::vector<double> wsum(n_coords, 0.0);
  std::vector<std::uint64_t> last(n_coords, 0);
  auto tri = [](std::uint64_t m) {
    return 0.5 * static_cast<double>(m) * (static_cast<double>(m) + 1.0);
  };
  // Fold the constant run of a coordinate into the weighted sum up to
  // iteration `upto` (the value w[c] held for iterations last[c]+1 .. upto).
  auto fold = [&](std::size_t c, std::uint64_t upto) {
    if (upto > last[c]) {
      if (w[c] != 0.0) wsum[c] += w[c] * (tri(upto) - tri(last[c]));
      last[c] = upto;
    }
  };

  const double gamma = cfg.gamma_lower;
  for (std::uint64_t i = 1; i <= n_iters; ++i) {
    const SgdSample sample = next();
    const double eta = 2.0 / (gamma * static_cast<double>(i + 1));
    const std::size_t c1 = static_cast<std::size_t>(sample.s_h) * A + sample.a_h;
    const double prev_ratio = h == 0 ? 1.0
                                     : ratio_prev[static_cast<std::size_t>(sample.s_prev) * A +
                                                  sample.a_prev];

    // Single combined gradient over the touched coordinates, then project.
    for (int a = 0; a < A; ++a) {
      const std::size_t c = static_cast<std::size_t>(sample.s_next) * A + a;
      if (d_row[c] == 0.0) continue;
      double g = -prev_ratio * prob.pi->prob(h, sample.s_next, a);
      if (c == c1 && w[c] != 0.0) g += w[c] / mu_row[c];
      if (g == 0.0) continue;
      fold(c, i - 1);
      w[c] = std::clamp(w[c] - eta * g, 0.0, 2.0 * d_row[c]);
    }
    if (sample.s_h != sample.s_next && d_row[c1] > 0.0 && w[c1] != 0.0) {
      fold(c1, i - 1);
      w[c1] = std::clamp(w[c1] - eta * (w[c1] / mu_row[c1]), 0.0, 2.0 * d_row[c1]);
    }
  }
  std::vector<double> avg(n_coords, 0.0);
  const double total = tri(n_iters);
  for (std::size_t c = 0; c < n_coords; ++c) {
    fold(c, n_iters);
    avg[c] = wsum[c] / total;
  }
  return avg;
}

namespace {

struct RepState {
  // Per-target, current step's ratio table of the previous step.
  std::vector<std::vector<double>> ratio_prev;
};

}  // namespace

IdesOutput run_ides(Simulator& sim, std::span<const PolicyTable> targets,
                    std::span<const CoarseVisitation> d_hats,
                    std::span<const PolicyTable> mixture_policies, const MixtureWeights& alpha,
                    const VisitationTable& mu_hat, const IdesConfig& cfg, RngStream rng,
                    std::ostream* trace) {
  cfg.require_valid();
  if (targets.size() != d_hats.size())
    throw std::invalid_argument("run_ides: target/table count mismatch");
  const TabularMdp& mdp = sim.mdp();
  const int K = static_cast<int>(targets.size());
  const int H = mdp.horizon;
  const int A = mdp.num_actions;
  const int N = mom_rep_count(cfg);
  const std::uint64_t start_count = sim.trajectories();

  IdesOutput out;
  out.weights.resize(K);
  for (int k = 0; k < K; ++k) {
    out.weights[k].w = VisitationTable::zeros(H, mdp.num_states, A);
    out.weights[k].mu_hat = mu_hat;
  }

  std::vector<IdesProblem> problems(K);
  std::vector<std::vector<std::uint64_t>> n_iters(K, std::vector<std::uint64_t>(H, 0));
  for (int k = 0; k < K; ++k) {
    problems[k] = {&mdp, &targets[k], &d_hats[k].table, &mu_hat};
    for (int h = 0; h < H; ++h) {
      n_iters[k][h] = ides_iteration_count(problems[k], h, cfg);
      if (n_iters[k][h] >= cfg.step_iter_cap) out.iteration_capped = true;
    }
  }

  // reps x steps x targets: candidate tables and their held-out losses.
  std::vector<std::vector<std::vector<std::vector<double>>>> candidates(
      N, std::vector<std::vector<std::vector<double>>>(H));
  std::vector<std::vector<std::vector<double>>> losses(
      N, std::vector<std::vector<double>>(H, std::vector<double>(K, 0.0)));

  if (trace) *trace << "run_id,h,iteration,loss_estimate,grad_norm_estimate\n";

  for (int rep = 0; rep < N; ++rep) {
    RngStream rep_rng = rng.substream(static_cast<std::uint64_t>(rep));
    RngStream sgd_rng = rep_rng.substream(0);
    RngStream holdout_rng = rep_rng.substream(1);

    std::vector<std::vector<double>> ratio_prev(
        K, std::vector<double>(static_cast<std::size_t>(mdp.num_states) * A, 0.0));

    for (int h = 0; h < H; ++h) {
      std::uint64_t n_max = 0, m_max = 0;
      std::vector<std::uint64_t> m_hold(K, 0);
      for (int k = 0; k < K; ++k) {
        n_max = std::max(n_max, n_iters[k][h]);
        m_hold[k] = std::max<std::uint64_t>(
            1, static_cast<std::uint64_t>(std::ceil(cfg.holdout_fraction *
                                                    static_cast<double>(n_iters[k][h]))));
        m_max = std::max(m_max, m_hold[k]);
      }

      // --- SGD over shared samples ---------------------------------------
      struct SparseIterate {
        std::vector<double> w, wsum;
        std::vector<std::uint64_t> last;
      };
      std::vector<SparseIterate> it(K);
      for (int k = 0; k < K; ++k) {
        it[k].w.assign(static_cast<std::size_t>(mdp.num_states) * A, 0.0);
        it[k].wsum.assign(it[k].w.size(), 0.0);
        it[k].last.assign(it[k].w.size(), 0);
      }
      auto tri = [](std::uint64_t m) {
        return 0.5 * static_cast<double>(m) * (static_cast<double>(m) + 1.0);
      };

      for (std::uint64_t i = 1; i <= n_max; ++i) {
        const Trajectory t1 =
            sim.rollout_mixture_prefix(mixture_policies, alpha, h + 1, sgd_rng);
        const Trajectory t2 =
            sim.rollout_mixture_prefix(mixture_policies, alpha, h + 1, sgd_rng);
        const int s_h = t1.states[h], a_h = t1.actions[h];
        const int s_next = t2.states[h];
        const int s_prev = h > 0 ? t2.states[h - 1] : 0;
        const int a_prev = h > 0 ? t2.actions[h - 1] : 0;
        const double eta_base = 2.0 / cfg.gamma_lower / static_cast<double>(i + 1);

        for (int k = 0; k < K; ++k) {
          if (i > n_iters[k][h]) continue;
          auto& st = it[k];
          const auto& d_row = d_hats[k].table.steps[h];
          const auto& mu_row = mu_hat.steps[h];
          auto fold = [&](std::size_t c) {
            if (i - 1 > st.last[c]) {
              if (st.w[c] != 0.0) st.wsum[c] += st.w[c] * (tri(i - 1) - tri(st.last[c]));
              st.last[c] = i - 1;
            }
          };

          const std::size_t c1 = static_cast<std::size_t>(s_h) * A + a_h;
          const double prev_ratio =
              h == 0 ? 1.0 : ratio_prev[k][static_cast<std::size_t>(s_prev) * A + a_prev];
          double grad_norm = 0.0;
          for (int a = 0; a < A; ++a) {
            const std::size_t c = static_cast<std::size_t>(s_next) * A + a;
            if (d_row[c] == 0.0) continue;
            double g = -prev_ratio * targets[k].prob(h, s_next, a);
            if (c == c1 && st.w[c] != 0.0) g += st.w[c] / mu_row[c];
            if (g == 0.0) continue;
            grad_norm += std::abs(g);
            fold(c);
            st.w[c] = std::clamp(st.w[c] - eta_base * g, 0.0, 2.0 * d_row[c]);
          }
          if (s_h != s_next && d_row[c1] > 0.0 && st.w[c1] != 0.0) {
            const double g1 = st.w[c1] / mu_row[c1];
            grad_norm += std::abs(g1);
            fold(c1);
            st.w[c1] = std::clamp(st.w[c1] - eta_base * g1, 0.0, 2.0 * d_row[c1]);
          }
          if (trace && k == 0 && cfg.trace_stride > 0 && i % cfg.trace_stride == 0) {
            const double w1 = st.w[c1];
            double lin = 0.0;
            for (int a = 0; a < A; ++a)
              lin += prev_ratio * targets[k].prob(h, s_next, a) *
                     st.w[static_cast<std::size_t>(s_next) * A + a];
            const double loss_est =
                (d_row[c1] > 0.0 ? 0.5 * w1 * w1 / mu_row[c1] : 0.0) - lin;
            *trace << rep << ',' << h << ',' << i << ',' << loss_est << ',' << grad_norm
                   << '\n';
          }
        }
      }

      // Triangular averages, one candidate table per target.
      for (int k = 0; k < K; ++k) {
        auto& st = it[k];
        const std::uint64_t n_k = n_iters[k][h];
        std::vector<double> avg(st.w.size(), 0.0);
        for (std::size_t c = 0; c < st.w.size(); ++c) {
          if (n_k > st.last[c] && st.w[c] != 0.0)
            st.wsum[c] += st.w[c] * (tri(n_k) - tri(st.last[c]));
          avg[c] = st.wsum[c] / tri(n_k);
        }
        candidates[rep][h].push_back(std::move(avg));
      }

      // --- Held-out loss evaluation ---------------------------------------
      std::vector<double> loss_acc(K, 0.0);
      for (std::uint64_t j = 1; j <= m_max; ++j) {
        const Trajectory t =
            sim.rollout_mixture_prefix(mixture_policies, alpha, h + 1, holdout_rng);
        const int s_h = t.states[h], a_h = t.actions[h];
        for (int k = 0; k < K; ++k) {
          if (j > m_hold[k]) continue;
          const auto& w_k = candidates[rep][h][k];
          const auto& mu_row = mu_hat.steps[h];
          const std::size_t c1 = static_cast<std::size_t>(s_h) * A + a_h;
          double term = 0.0;
          if (w_k[c1] != 0.0) term += 0.5 * w_k[c1] * w_k[c1] / mu_row[c1];
          const double prev_ratio =
              h == 0 ? 1.0
                     : ratio_prev[k][static_cast<std::size_t>(t.states[h - 1]) * A +
                                     t.actions[h - 1]];
          if (prev_ratio != 0.0)
            for (int a = 0; a < A; ++a)
              term -= prev_ratio * targets[k].prob(h, s_h, a) *
                      w_k[static_cast<std::size_t>(s_h) * A + a];
          loss_acc[k] += term;
        }
      }
      for (int k = 0; k < K; ++k)
        losses[rep][h][k] = loss_acc[k] / static_cast<double>(m_hold[k]);

      // Ratio tables feeding the next step of this repetition.
      for (int k = 0; k < K; ++k) {
        const auto& w_k = candidates[rep][h][k];
        for (std::size_t c = 0; c < w_k.size(); ++c)
          ratio_prev[k][c] = safe_ratio(w_k[c], mu_hat.steps[h][c], "run_ides ratio");
      }
    }
  }

  // Median-of-means selection per (target, step).
  for (int k = 0; k < K; ++k)
    for (int h = 0; h < H; ++h) {
      std::vector<double> l(N);
      for (int rep = 0; rep < N; ++rep) l[rep] = losses[rep][h][k];
      const int pick = mom_select_index(l);
      out.weights[k].w.steps[h] = candidates[pick][h][k];
    }

  out.trajectories = sim.trajectories() - start_count;
  return out;
}

ImportanceWeightTable run_ides(Simulator& sim, const PolicyTable& target,
                               const CoarseVisitation& d_hat,
                               std::span<const PolicyTable> mixture_policies,
                               const MixtureWeights& alpha, const VisitationTable& mu_hat,
                               const IdesConfig& cfg, RngStream rng) {
  IdesOutput out = run_ides(sim, {&target, 1}, {&d_hat, 1}, mixture_policies, alpha, mu_hat, cfg,
                            rng, nullptr);
  return std::move(out.weights[0]);
}

std::vector<double> density_l1_error(const ImportanceWeightTable& weights,
                                     const VisitationTable& mu_tilde,
                                     const VisitationTable& d_oracle) {
  std::vector<double> err(d_oracle.horizon, 0.0);
  for (int h = 0; h < d_oracle.horizon; ++h)
    for (int s = 0; s < d_oracle.num_states; ++s)
      for (int a = 0; a < d_oracle.num_actions; ++a) {
        const double est = mu_tilde.at(h, s, a) * weights.ratio(h, s, a);
        err[h] += std::abs(est - d_oracle.at(h, s, a));
      }
  return err;
}

VisitationTable mask_to_support(const VisitationTable& oracle, const CoarseVisitation& coarse) {
  VisitationTable masked = oracle;
  for (int h = 0; h < masked.horizon; ++h)
    for (std::size_t i = 0; i < masked.steps[h].size(); ++i)
      if (coarse.table.steps[h][i] == 0.0) masked.steps[h][i] = 0.0;
  return masked;
}

}  // namespace caesar
