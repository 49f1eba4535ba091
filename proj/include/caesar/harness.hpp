#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "caesar/caesar.hpp"
#include "caesar/mdp.hpp"

namespace caesar {

struct GeneratedExample {
  TabularMdp mdp;
  std::vector<PolicyTable> policies;
};

/// Two-layer chain: one initial state, two terminal states, every action
/// reaches the rewarding terminal with probability p. The K policies differ
/// only in their first-layer action, so all share one terminal visitation and
/// every oracle value equals p.
GeneratedExample gen_two_layer_k_example(int K, double p);

/// Two-layer instance whose policies differ only at the rewarding terminal
/// state; the unconstrained state-level optimum puts mass K^2/(1+K^2) there
/// while every realizable policy puts exactly 1/2.
GeneratedExample gen_unrealizable_example(int K);

struct UnrealizableDemo {
  int K = 0;
  double unconstrained_mass = 0.0;  // layer-2 mass on the rewarding state
  double realizable_mass = 0.0;     // 1/2 for every policy
  std::vector<double> state_masses;  // per layer-2 state
};

/// Equalizing state-level allocation mu(s) proportional to D(s)^2 with
/// D(s) = sum_a max_k d_2^k(s,a); demonstrates the gap to the realizable set.
UnrealizableDemo unrealizable_demo(const GeneratedExample& example);

struct RandomMdpOptions {
  double transition_sparsity = 0.0;  // fraction of next-state entries zeroed
  double reward_sparsity = 0.0;
};

TabularMdp gen_random_mdp(int S, int A, int H, const RandomMdpOptions& opts, std::uint64_t seed);
PolicyTable gen_random_policy(int S, int A, int H, std::uint64_t seed);

struct ExperimentCell {
  std::string family;  // "random" or "two_layer"
  int S = 4, A = 2, H = 3, K = 2;
  double p = 0.1;  // two_layer reach probability
};

struct ExperimentConfig {
  std::vector<ExperimentCell> cells;
  std::vector<double> epsilons{0.1};
  std::vector<double> deltas{0.1};
  std::vector<std::string> algos{"caesar", "mc"};
  int repetitions = 1;
  std::uint64_t seed = 1;
  std::string out_dir = "results";
  std::string constants_file;  // optional TheoryConstants JSON
  std::uint64_t budget_cap = 100000000;
};

struct ExperimentRow {
  std::string family;
  int S = 0, A = 0, H = 0, K = 0;
  double epsilon = 0.0, delta = 0.0;
  std::string algo;
  std::uint64_t seed = 0;
  std::uint64_t total_trajectories = 0;
  double max_abs_err = -1.0;  // -1 when no oracle available
  bool success = false;
  bool failed = false;  // the run itself errored
  std::string error;
};

std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Deterministic CSV encoding of the aggregate rows (stable order, fixed
/// formatting) so reruns of the same config are byte-identical.
std::string experiment_csv(std::vector<ExperimentRow> rows);

struct CalibrationConfig {
  std::uint64_t seed = 20240601;
  int coarse_runs = 100;
  int ides_seeds = 20;
  int e2e_runs = 20;
  int march_runs = 10;
  double tolerance_margin = 0.05;
};

/// Smallest constants passing the module-level statistical properties on the
/// fixed reference suite, found by bisection on a log grid per constant.
TheoryConstants calibrate_constants(const CalibrationConfig& cfg, std::ostream* log = nullptr);

}  // namespace caesar
