#include "caesar/optdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace caesar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

VisitationTable mixture_table(std::span<const VisitationTable> tables,
                              std::span<const double> alpha) {
  const auto& first = tables[0];
  VisitationTable mu = VisitationTable::zeros(first.horizon, first.num_states, first.num_actions);
  for (std::size_t k = 0; k < tables.size(); ++k) {
    if (alpha[k] == 0.0) continue;
    for (int h = 0; h < mu.horizon; ++h)
      for (std::size_t i = 0; i < mu.steps[h].size(); ++i)
        mu.steps[h][i] += alpha[k] * tables[k].steps[h][i];
  }
  return mu;
}

/// Per-step value for one policy's table against a fixed mixture row.
double ratio_sum(const std::vector<double>& d, const std::vector<double>& mu) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) continue;
    if (mu[i] <= 0.0) return kInf;
    acc += d[i] * d[i] / mu[i];
  }
  return acc;
}

struct StepEval {
  double value = 0.0;
  int active_k = 0;
};

StepEval eval_step(const SamplingObjective& obj, std::span<const double> alpha, int h,
                   const std::vector<double>& mu_row) {
  StepEval ev;
  ev.value = -kInf;
  for (int k = 0; k < obj.num_policies(); ++k) {
    const double v = ratio_sum(obj.tables[k].steps[h], mu_row);
    if (v > ev.value) {
      ev.value = v;
      ev.active_k = k;
    }
  }
  return ev;
}

}  // namespace

SamplingObjective SamplingObjective::from_tables(std::vector<VisitationTable> tables) {
  if (tables.empty()) throw std::invalid_argument("SamplingObjective: no tables");
  SamplingObjective obj;
  obj.horizon = tables[0].horizon;
  obj.num_states = tables[0].num_states;
  obj.num_actions = tables[0].num_actions;
  for (const auto& t : tables)
    if (t.horizon != obj.horizon || t.num_states != obj.num_states ||
        t.num_actions != obj.num_actions)
      throw std::invalid_argument("SamplingObjective: table shapes differ");

  obj.support.assign(obj.horizon,
                     std::vector<std::uint8_t>(static_cast<std::size_t>(obj.num_states) *
                                                   obj.num_actions,
                                               0));
  for (const auto& t : tables)
    for (int h = 0; h < obj.horizon; ++h)
      for (std::size_t i = 0; i < t.steps[h].size(); ++i)
        if (t.steps[h][i] > 0.0) obj.support[h][i] = 1;
  obj.tables = std::move(tables);
  return obj;
}

double objective_value(const SamplingObjective& obj, const MixtureWeights& alpha, int h) {
  alpha.require_valid();
  if (alpha.size() != obj.num_policies())
    throw std::invalid_argument("objective_value: alpha length mismatch");
  const VisitationTable mu = mixture_table(obj.tables, alpha.alpha);
  return eval_step(obj, alpha.alpha, h, mu.steps[h]).value;
}

double objective_total(const SamplingObjective& obj, const MixtureWeights& alpha) {
  double total = 0.0;
  for (int h = 0; h < obj.horizon; ++h) total += objective_value(obj, alpha, h);
  return total;
}

namespace {

/// Exponentiated-subgradient minimization of
///   F(alpha) = sum over selected steps of max_k sum (d_k^2 / mu_alpha),
/// selected steps = all h, or the single step `only_h` when only_h >= 0.
SamplingSolution solve_impl(const SamplingObjective& obj, int only_h, const SolveOptions& opts) {
  const int K = obj.num_policies();
  const int H = obj.horizon;
  const double floor = opts.alpha_floor_scale / static_cast<double>(K);

  auto apply_floor = [&](std::vector<double>& a) {
    double sum = 0.0;
    for (double& v : a) {
      v = std::max(v, floor);
      sum += v;
    }
    for (double& v : a) v /= sum;
  };

  auto eval_f_and_grad = [&](const std::vector<double>& a, std::vector<double>& grad) {
    const VisitationTable mu = mixture_table(obj.tables, a);
    std::fill(grad.begin(), grad.end(), 0.0);
    double f = 0.0;
    for (int h = 0; h < H; ++h) {
      if (only_h >= 0 && h != only_h) continue;
      const StepEval ev = eval_step(obj, a, h, mu.steps[h]);
      f += ev.value;
      const auto& dstar = obj.tables[ev.active_k].steps[h];
      const auto& mu_row = mu.steps[h];
      for (std::size_t i = 0; i < dstar.size(); ++i) {
        if (dstar[i] == 0.0) continue;
        const double coef = dstar[i] * dstar[i] / (mu_row[i] * mu_row[i]);
        for (int j = 0; j < K; ++j) grad[j] -= coef * obj.tables[j].steps[h][i];
      }
    }
    return f;
  };

  auto finalize = [&](std::vector<double> a, double f, int iters, bool converged, double gap) {
    SamplingSolution sol;
    sol.alpha.alpha = std::move(a);
    sol.mu_hat = mixture_table(obj.tables, sol.alpha.alpha);
    sol.objective_per_step.resize(H, 0.0);
    sol.objective_total = 0.0;
    for (int h = 0; h < H; ++h) {
      sol.objective_per_step[h] = eval_step(obj, sol.alpha.alpha, h, sol.mu_hat.steps[h]).value;
      if (only_h < 0 || h == only_h) sol.objective_total += sol.objective_per_step[h];
    }
    sol.iterations = iters;
    sol.converged = converged;
    sol.certificate_gap = gap;
    return sol;
  };

  std::vector<double> a(K, 1.0 / K);
  if (K == 1) return finalize(a, eval_f_and_grad(a, a), 0, true, 0.0);

  std::vector<double> grad(K, 0.0);
  std::vector<double> best_alpha = a;
  double best_f = kInf;
  double lower_bound = -kInf;
  std::vector<double> window;  // best-so-far trace for the stall test

  int t = 1;
  bool converged = false;
  for (; t <= opts.max_iters; ++t) {
    const double f = eval_f_and_grad(a, grad);
    if (f < best_f) {
      best_f = f;
      best_alpha = a;
    }

    // Linearization at a lower-bounds F on the whole simplex:
    // F(x) >= f + g.(x - a) >= f - g.a + min_j g_j.
    double ga = 0.0, gmin = kInf, gmax = -kInf;
    for (int j = 0; j < K; ++j) {
      ga += grad[j] * a[j];
      gmin = std::min(gmin, grad[j]);
      gmax = std::max(gmax, std::abs(grad[j]));
    }
    lower_bound = std::max(lower_bound, f - ga + gmin);

    const double gap = best_f - lower_bound;
    if (gap <= opts.tol * std::max(1.0, std::abs(best_f))) {
      converged = true;
      break;
    }
    window.push_back(best_f);
    if (static_cast<int>(window.size()) > opts.improvement_window) {
      const double old = window[window.size() - 1 - opts.improvement_window];
      if (old - best_f < opts.tol * std::max(1.0, std::abs(best_f))) {
        converged = true;
        break;
      }
    }

    // Multiplicative update with inf-norm-normalized subgradient.
    const double scale = gmax > 0.0 ? gmax : 1.0;
    const double eta = 0.5 / std::sqrt(static_cast<double>(t));
    double sum = 0.0;
    for (int j = 0; j < K; ++j) {
      a[j] *= std::exp(-eta * grad[j] / scale);
      sum += a[j];
    }
    for (double& v : a) v /= sum;
    apply_floor(a);
  }

  const double gap = best_f - lower_bound;
  SamplingSolution sol = finalize(best_alpha, best_f, std::min(t, opts.max_iters), converged, gap);
  if (!converged) throw SolverNonConvergence(std::move(sol), gap);
  return sol;
}

}  // namespace

SamplingSolution solve_alpha(const SamplingObjective& obj, const SolveOptions& opts) {
  return solve_impl(obj, -1, opts);
}

SamplingSolution solve_alpha_per_step(const SamplingObjective& obj, int h,
                                      const SolveOptions& opts) {
  if (h < 0 || h >= obj.horizon) throw std::invalid_argument("solve_alpha_per_step: bad step");
  return solve_impl(obj, h, opts);
}

VisitationTable realized_mixture(std::span<const VisitationTable> oracle_tables,
                                 const MixtureWeights& alpha) {
  alpha.require_valid();
  if (alpha.size() != static_cast<int>(oracle_tables.size()))
    throw std::invalid_argument("realized_mixture: alpha length mismatch");
  return mixture_table(oracle_tables, alpha.alpha);
}

VisitationTable realized_mixture_on_support(std::span<const VisitationTable> oracle_tables,
                                            const MixtureWeights& alpha,
                                            std::span<const CoarseVisitation> coarse) {
  alpha.require_valid();
  if (oracle_tables.size() != coarse.size())
    throw std::invalid_argument("realized_mixture_on_support: table count mismatch");
  std::vector<VisitationTable> masked(oracle_tables.begin(), oracle_tables.end());
  for (std::size_t k = 0; k < masked.size(); ++k)
    for (int h = 0; h < masked[k].horizon; ++h)
      for (std::size_t i = 0; i < masked[k].steps[h].size(); ++i)
        if (coarse[k].table.steps[h][i] == 0.0) masked[k].steps[h][i] = 0.0;
  return mixture_table(masked, alpha.alpha);
}

}  // namespace caesar
