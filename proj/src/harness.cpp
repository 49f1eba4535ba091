#include "caesar/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include "caesar/io.hpp"
#include "caesar/march.hpp"
#include "caesar/rng.hpp"

namespace caesar {

namespace {

TabularMdp two_layer_mdp(int K, double p) {
  const int S = 3;          // 0: initial, 1: rewarding terminal, 2: other terminal
  const int A = std::max(K, 2);
  const int H = 2;
  TabularMdp mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.horizon = H;
  mdp.initial_dist = {1.0, 0.0, 0.0};
  mdp.transitions.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A * S, 0.0));
  mdp.rewards.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 0.0));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        auto set = [&](int s2, double v) {
          mdp.transitions[h][(static_cast<std::size_t>(s) * A + a) * S + s2] = v;
        };
        if (h == 0 && s == 0) {
          set(1, p);
          set(2, 1.0 - p);
        } else {
          set(s, 1.0);  // unreachable or final-step rows; kept valid
        }
      }
  for (int a = 0; a < A; ++a) mdp.rewards[1][static_cast<std::size_t>(1) * A + a] = 1.0;
  return mdp;
}

}  // namespace

GeneratedExample gen_two_layer_k_example(int K, double p) {
  if (K < 1) throw std::invalid_argument("gen_two_layer_k_example: K must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("gen_two_layer_k_example: p in (0,1)");
  GeneratedExample ex;
  ex.mdp = two_layer_mdp(K, p);
  const int A = ex.mdp.num_actions;
  if (K > A) throw std::invalid_argument("gen_two_layer_k_example: K exceeds action count");
  for (int k = 0; k < K; ++k) {
    // Distinct first-layer action, shared second-layer action.
    std::vector<std::vector<int>> action{{k, 0, 0}, {0, 0, 0}};
    ex.policies.push_back(PolicyTable::deterministic(2, 3, A, action));
  }
  return ex;
}

GeneratedExample gen_unrealizable_example(int K) {
  if (K < 2) throw std::invalid_argument("gen_unrealizable_example: K must be >= 2");
  GeneratedExample ex;
  ex.mdp = two_layer_mdp(K, 0.5);
  const int A = ex.mdp.num_actions;
  for (int k = 0; k < K; ++k) {
    // Shared first-layer action, distinct action at the rewarding terminal.
    std::vector<std::vector<int>> action{{0, 0, 0}, {0, k, 0}};
    ex.policies.push_back(PolicyTable::deterministic(2, 3, A, action));
  }
  return ex;
}

UnrealizableDemo unrealizable_demo(const GeneratedExample& example) {
  const TabularMdp& mdp = example.mdp;
  const int S = mdp.num_states, A = mdp.num_actions;
  UnrealizableDemo demo;
  demo.K = static_cast<int>(example.policies.size());

  std::vector<VisitationTable> tables;
  for (const auto& pi : example.policies) tables.push_back(exact_visitation(mdp, pi));

  std::vector<double> aggregate(S, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double best = 0.0;
      for (const auto& t : tables) best = std::max(best, t.at(1, s, a));
      aggregate[s] += best;
    }
  double norm = 0.0;
  for (double v : aggregate) norm += v * v;
  demo.state_masses.resize(S, 0.0);
  for (int s = 0; s < S; ++s) demo.state_masses[s] = aggregate[s] * aggregate[s] / norm;
  demo.unconstrained_mass = demo.state_masses[1];

  double realizable = 0.0;
  for (int a = 0; a < A; ++a) realizable += tables[0].at(1, 1, a);
  demo.realizable_mass = realizable;
  return demo;
}

TabularMdp gen_random_mdp(int S, int A, int H, const RandomMdpOptions& opts, std::uint64_t seed) {
  RngStream rng(seed, 0x6d6470);
  TabularMdp mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.horizon = H;

  auto dirichlet_row = [&](std::vector<double>& row, std::size_t offset, int n, double sparsity) {
    double sum = 0.0;
    std::vector<double> draws(n, 0.0);
    for (int i = 0; i < n; ++i) {
      if (sparsity > 0.0 && rng.next_double() < sparsity) continue;
      draws[i] = -std::log(1.0 - rng.next_double());
    }
    for (int i = 0; i < n; ++i) sum += draws[i];
    if (sum == 0.0) {
      draws[static_cast<int>(rng.next_u64() % n)] = 1.0;
      sum = 1.0;
    }
    for (int i = 0; i < n; ++i) row[offset + i] = draws[i] / sum;
  };

  mdp.initial_dist.assign(S, 0.0);
  dirichlet_row(mdp.initial_dist, 0, S, 0.0);

  mdp.transitions.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A * S, 0.0));
  mdp.rewards.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 0.0));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        dirichlet_row(mdp.transitions[h], (static_cast<std::size_t>(s) * A + a) * S, S,
                      opts.transition_sparsity);
        double r = rng.next_double();
        if (opts.reward_sparsity > 0.0 && rng.next_double() < opts.reward_sparsity) r = 0.0;
        mdp.rewards[h][static_cast<std::size_t>(s) * A + a] = r;
      }
  return mdp;
}

PolicyTable gen_random_policy(int S, int A, int H, std::uint64_t seed) {
  RngStream rng(seed, 0x706f6c);
  PolicyTable pi;
  pi.horizon = H;
  pi.num_states = S;
  pi.num_actions = A;
  pi.table.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 0.0));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s) {
      double sum = 0.0;
      std::vector<double> draws(A);
      for (int a = 0; a < A; ++a) {
        draws[a] = -std::log(1.0 - rng.next_double());
        sum += draws[a];
      }
      for (int a = 0; a < A; ++a) pi.table[h][static_cast<std::size_t>(s) * A + a] = draws[a] / sum;
    }
  return pi;
}

namespace {

struct Instance {
  TabularMdp mdp;
  std::vector<PolicyTable> policies;
};

Instance build_instance(const ExperimentCell& cell, std::uint64_t seed) {
  Instance inst;
  if (cell.family == "two_layer") {
    GeneratedExample ex = gen_two_layer_k_example(cell.K, cell.p);
    inst.mdp = std::move(ex.mdp);
    inst.policies = std::move(ex.policies);
  } else if (cell.family == "random") {
    inst.mdp = gen_random_mdp(cell.S, cell.A, cell.H, {}, seed * 2654435761ULL + 17);
    for (int k = 0; k < cell.K; ++k)
      inst.policies.push_back(
          gen_random_policy(cell.S, cell.A, cell.H, seed * 40503ULL + 7919 * (k + 1)));
  } else {
    throw std::invalid_argument("unknown family: " + cell.family);
  }
  return inst;
}

}  // namespace

std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  if (cfg.repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (cfg.cells.empty() || cfg.epsilons.empty() || cfg.deltas.empty() || cfg.algos.empty())
    throw std::invalid_argument("experiment grid is empty");

  std::optional<TheoryConstants> constants;
  if (!cfg.constants_file.empty()) constants = load_constants(cfg.constants_file);

  std::filesystem::create_directories(cfg.out_dir);
  std::vector<ExperimentRow> rows;

  int run_index = 0;
  for (std::size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const ExperimentCell& cell = cfg.cells[ci];
    for (double eps : cfg.epsilons)
      for (double delta : cfg.deltas)
        for (const std::string& algo : cfg.algos)
          for (int rep = 0; rep < cfg.repetitions; ++rep, ++run_index) {
            ExperimentRow row;
            row.family = cell.family;
            row.S = cell.family == "two_layer" ? 3 : cell.S;
            row.A = cell.family == "two_layer" ? std::max(cell.K, 2) : cell.A;
            row.H = cell.family == "two_layer" ? 2 : cell.H;
            row.K = cell.K;
            row.epsilon = eps;
            row.delta = delta;
            row.algo = algo;
            row.seed = cfg.seed + rep;
            try {
              const Instance inst = build_instance(cell, cfg.seed + ci);
              RngStream rng(row.seed, static_cast<std::uint64_t>(run_index));
              EvaluationReport report;
              if (algo == "caesar") {
                CaesarConfig run_cfg;
                run_cfg.epsilon = eps;
                run_cfg.delta = delta;
                run_cfg.budget_cap = cfg.budget_cap;
                if (constants) run_cfg.constants = constants;
                report = evaluate_policies(inst.mdp, inst.policies, run_cfg, rng);
              } else if (algo == "mc") {
                report = mc_baseline(inst.mdp, inst.policies, eps, delta, rng);
              } else {
                throw std::invalid_argument("unknown algo: " + algo);
              }
              row.total_trajectories = report.phases.total();
              if (report.oracle_values) {
                double worst = 0.0;
                for (std::size_t k = 0; k < report.estimates.size(); ++k)
                  worst = std::max(worst,
                                   std::abs(report.estimates[k] - (*report.oracle_values)[k]));
                row.max_abs_err = worst;
                row.success = worst <= eps && !report.budget_exceeded;
              } else {
                row.success = !report.budget_exceeded;
              }
              std::ostringstream name;
              name << cell.family << "_K" << cell.K << "_e" << eps << "_d" << delta << "_"
                   << algo << "_s" << row.seed << ".json";
              save_report(report, std::filesystem::path(cfg.out_dir) / name.str());
            } catch (const std::exception& e) {
              row.failed = true;
              row.error = e.what();
            }
            if (log)
              *log << row.family << " K=" << row.K << " eps=" << row.epsilon << " " << row.algo
                   << " seed=" << row.seed << (row.failed ? " FAILED" : " ok")
                   << " n=" << row.total_trajectories << " err=" << row.max_abs_err << "\n";
            rows.push_back(std::move(row));
          }
  }

  const std::string csv = experiment_csv(rows);
  std::ofstream out(std::filesystem::path(cfg.out_dir) / "aggregate.csv");
  out << csv;
  return rows;
}

std::string experiment_csv(std::vector<ExperimentRow> rows) {
  auto key = [](const ExperimentRow& r) {
    std::ostringstream os;
    os << r.family << '|' << r.S << '|' << r.A << '|' << r.H << '|' << r.K << '|' << r.epsilon
       << '|' << r.delta << '|' << r.algo << '|' << r.seed;
    return os.str();
  };
  std::sort(rows.begin(), rows.end(),
            [&](const ExperimentRow& a, const ExperimentRow& b) { return key(a) < key(b); });

  std::ostringstream os;
  os << "family,S,A,H,K,epsilon,delta,algo,seed,total_trajectories,max_abs_err,success\n";
  os.precision(12);
  for (const auto& r : rows) {
    os << r.family << ',' << r.S << ',' << r.A << ',' << r.H << ',' << r.K << ',' << r.epsilon
       << ',' << r.delta << ',' << r.algo << ',' << r.seed << ',' << r.total_trajectories << ',';
    if (r.max_abs_err >= 0.0) os << r.max_abs_err;
    os << ',' << (r.success ? 1 : 0) << '\n';
  }
  return os.str();
}

namespace {

/// Smallest grid value passing `pass`, assuming monotonicity in the constant.
double bisect_constant(double lo, double hi, const std::function<bool(double)>& pass,
                       std::ostream* log, const char* name) {
  if (pass(lo)) return lo;
  if (!pass(hi)) {
    if (log) *log << name << ": no value in range passes; keeping " << hi << "\n";
    return hi;
  }
  for (int step = 0; step < 8; ++step) {
    const double mid = std::sqrt(lo * hi);
    const bool ok = pass(mid);
    if (log) *log << name << ": " << mid << (ok ? " pass" : " fail") << "\n";
    (ok ? hi : lo) = mid;
    if (hi / lo < 1.2) break;
  }
  return hi;
}

}  // namespace

TheoryConstants calibrate_constants(const CalibrationConfig& cfg, std::ostream* log) {
  TheoryConstants constants = TheoryConstants::theory();

  // Reference instances.
  const TabularMdp ref_mdp = gen_random_mdp(4, 2, 3, {}, cfg.seed + 101);
  const PolicyTable ref_policy = gen_random_policy(4, 2, 3, cfg.seed + 102);
  const VisitationTable ref_truth = exact_visitation(ref_mdp, ref_policy);

  // Coarse constant: simultaneous coarse event rate at (eps=0.05, delta=0.1).
  auto coarse_pass = [&](double c) {
    CoarseConfig cc;
    cc.epsilon = 0.05;
    cc.delta = 0.1;
    cc.c_univ = c;
    int hits = 0;
    for (int run = 0; run < cfg.coarse_runs; ++run) {
      RngStream rng(cfg.seed + run, 0xC0A);
      const CoarseVisitation est = coarse_estimate(ref_mdp, ref_policy, cc, rng);
      if (coarse_event_holds(est.table, ref_truth, cc.epsilon)) ++hits;
    }
    const double need = (1.0 - cc.delta - cfg.tolerance_margin) * cfg.coarse_runs;
    return hits >= need;
  };
  constants.coarse_c = bisect_constant(0.25, 64.0, coarse_pass, log, "coarse_c");

  // IDES constant: seed-averaged per-step density error <= eps/(4H) at eps=0.2.
  std::vector<PolicyTable> ides_targets;
  for (int k = 0; k < 3; ++k)
    ides_targets.push_back(gen_random_policy(4, 2, 3, cfg.seed + 201 + k));
  auto ides_pass = [&](double c_h) {
    const double eps = 0.2;
    const int H = ref_mdp.horizon;
    std::vector<double> err_sum(H, 0.0);
    for (int run = 0; run < cfg.ides_seeds; ++run) {
      RngStream rng(cfg.seed + 1000 + run, 0x1DE5);
      Simulator sim(ref_mdp);
      CoarseConfig cc;
      cc.epsilon = eps / (14.0 * ref_mdp.sa());
      cc.delta = 0.05;
      cc.c_univ = constants.coarse_c;
      std::vector<CoarseVisitation> coarse;
      RngStream coarse_rng = rng.substream(1);
      for (std::size_t k = 0; k < ides_targets.size(); ++k) {
        RngStream policy_rng = coarse_rng.substream(k);
        coarse.push_back(
            threshold_low_mass(coarse_estimate(sim, ides_targets[k], cc, policy_rng), eps));
      }
      std::vector<VisitationTable> tables;
      for (const auto& c : coarse) tables.push_back(c.table);
      const SamplingSolution sol = solve_alpha(SamplingObjective::from_tables(tables));

      IdesConfig ic;
      ic.epsilon = eps;
      ic.delta = 0.1;
      ic.c_h = c_h;
      ic.mom_reps = 1;
      IdesOutput out = run_ides(sim, ides_targets, coarse, ides_targets, sol.alpha, sol.mu_hat,
                                ic, rng.substream(2), nullptr);

      std::vector<VisitationTable> oracle;
      for (const auto& pi : ides_targets) oracle.push_back(exact_visitation(ref_mdp, pi));
      for (std::size_t k = 0; k < ides_targets.size(); ++k) {
        const VisitationTable mu_tilde =
            realized_mixture_on_support(oracle, sol.alpha, coarse);
        const VisitationTable masked = mask_to_support(oracle[k], coarse[k]);
        const std::vector<double> err = density_l1_error(out.weights[k], mu_tilde, masked);
        for (int h = 0; h < H; ++h) err_sum[h] += err[h] / ides_targets.size();
      }
    }
    const double budget = 0.2 / (4.0 * ref_mdp.horizon);
    for (int h = 0; h < ref_mdp.horizon; ++h)
      if (err_sum[h] / cfg.ides_seeds > budget) return false;
    return true;
  };
  constants.ides_c_h = bisect_constant(0.0625, 32.0, ides_pass, log, "ides_c_h");

  // Final-phase multiplier: end-to-end accuracy rate at eps=0.1, delta=0.1.
  std::vector<PolicyTable> e2e_targets;
  for (int k = 0; k < 5; ++k)
    e2e_targets.push_back(gen_random_policy(4, 2, 3, cfg.seed + 301 + k));
  std::vector<double> e2e_truth;
  for (const auto& pi : e2e_targets) e2e_truth.push_back(exact_value(ref_mdp, pi));
  auto e2e_pass = [&](double bernstein) {
    CaesarConfig cc;
    cc.epsilon = 0.1;
    cc.delta = 0.1;
    TheoryConstants tc = constants;
    tc.bernstein = bernstein;
    cc.constants = tc;
    int hits = 0;
    for (int run = 0; run < cfg.e2e_runs; ++run) {
      const EvaluationReport report =
          evaluate_policies(ref_mdp, e2e_targets, cc, RngStream(cfg.seed + 2000 + run));
      bool ok = !report.budget_exceeded;
      for (std::size_t k = 0; ok && k < e2e_truth.size(); ++k)
        ok = std::abs(report.estimates[k] - e2e_truth[k]) <= cc.epsilon;
      if (ok) ++hits;
    }
    return hits >= (1.0 - 0.1 - cfg.tolerance_margin) * cfg.e2e_runs;
  };
  constants.bernstein = bisect_constant(0.125, 8.0, e2e_pass, log, "bernstein");

  // MARCH constant: all-deterministic-policy coarse bound rate at eps=0.1.
  const TabularMdp march_mdp = gen_random_mdp(2, 2, 3, {}, cfg.seed + 401);
  const CoverDistribution cover = build_cover(march_mdp, CoverMode::oracle_cover, 0.1);
  const std::vector<PolicyTable> march_policies = enumerate_deterministic_policies(march_mdp);
  std::vector<VisitationTable> march_truth;
  for (const auto& pi : march_policies) march_truth.push_back(exact_visitation(march_mdp, pi));
  auto march_pass = [&](double c) {
    MarchConfig mc;
    mc.epsilon = 0.1;
    mc.delta = 0.1;
    mc.c_univ = c;
    int hits = 0;
    for (int run = 0; run < cfg.march_runs; ++run) {
      Simulator sim(march_mdp);
      const MarchData data =
          march_collect(sim, cover, mc, RngStream(cfg.seed + 3000 + run, 0x4d41));
      bool ok = true;
      for (std::size_t k = 0; ok && k < march_policies.size(); ++k) {
        const CoarseVisitation est = march_estimate(data, march_policies[k]);
        ok = coarse_event_holds(est.table, march_truth[k], mc.epsilon);
      }
      if (ok) ++hits;
    }
    return hits >= 0.9 * cfg.march_runs;
  };
  constants.march_c = bisect_constant(0.25, 32.0, march_pass, log, "march_c");

  return constants;
}

}  // namespace caesar
