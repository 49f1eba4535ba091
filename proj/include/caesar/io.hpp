#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "caesar/caesar.hpp"
#include "caesar/harness.hpp"
#include "caesar/mdp.hpp"
#include "caesar/optdist.hpp"
#include "caesar/policy_id.hpp"
#include "caesar/sampler.hpp"

namespace caesar {

// MDP file: {"num_states", "num_actions", "horizon", "initial_dist": [S],
//            "transitions": [H][S][A][S], "rewards": [H][S][A]}.
TabularMdp load_mdp(const std::filesystem::path& path);
void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path);

// Policy file: {"horizon", "table": [H][S][A]}; a policies file is either one
// policy object, a bare array of them, or {"policies": [...]}.
PolicyTable load_policy(const std::filesystem::path& path);
std::vector<PolicyTable> load_policies(const std::filesystem::path& path);
void save_policies(std::span<const PolicyTable> policies, const std::filesystem::path& path);

void save_report(const EvaluationReport& report, const std::filesystem::path& path);
void save_report_csv(const EvaluationReport& report, const std::filesystem::path& path);

void save_solution(const SamplingSolution& solution, const std::filesystem::path& path);

TheoryConstants load_constants(const std::filesystem::path& path);
void save_constants(const TheoryConstants& constants, const std::filesystem::path& path);

void save_identification(const IdentificationResult& result, double epsilon, double delta,
                         std::uint64_t seed, const std::filesystem::path& path);

// One JSON object per line: {"policy_index": k, "steps": [[s,a,r], ...]}.
void dump_trajectories_jsonl(std::span<const std::pair<int, Trajectory>> batch,
                             const std::filesystem::path& path);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace caesar
