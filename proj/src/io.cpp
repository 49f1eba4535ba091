#include "caesar/io.hpp"

#include <fstream>
#include <json.hpp>

namespace caesar {

namespace {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  in >> j;
  return j;
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

std::vector<double> flatten2(const json& rows, int n0, int n1, const char* what) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != n0)
    throw std::runtime_error(std::string(what) + ": wrong outer length");
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(n0) * n1);
  for (const auto& row : rows) {
    if (!row.is_array() || static_cast<int>(row.size()) != n1)
      throw std::runtime_error(std::string(what) + ": wrong inner length");
    for (const auto& v : row) flat.push_back(v.get<double>());
  }
  return flat;
}

json nest2(std::span<const double> flat, int n0, int n1) {
  json rows = json::array();
  for (int i = 0; i < n0; ++i) {
    json row = json::array();
    for (int j = 0; j < n1; ++j) row.push_back(flat[static_cast<std::size_t>(i) * n1 + j]);
    rows.push_back(std::move(row));
  }
  return rows;
}

PolicyTable policy_from_json(const json& j, const char* what) {
  PolicyTable pi;
  pi.horizon = j.at("horizon").get<int>();
  const json& table = j.at("table");
  if (!table.is_array() || static_cast<int>(table.size()) != pi.horizon)
    throw std::runtime_error(std::string(what) + ": table length != horizon");
  pi.num_states = static_cast<int>(table.at(0).size());
  pi.num_actions = static_cast<int>(table.at(0).at(0).size());
  for (const auto& step : table)
    pi.table.push_back(flatten2(step, pi.num_states, pi.num_actions, what));
  const auto report = validate_policy(pi, pi.num_states, pi.num_actions, pi.horizon);
  if (!report.ok())
    throw std::runtime_error(std::string(what) + " failed validation:\n" + report.to_string());
  return pi;
}

json policy_to_json(const PolicyTable& pi) {
  json steps = json::array();
  for (const auto& step : pi.table) steps.push_back(nest2(step, pi.num_states, pi.num_actions));
  return json{{"horizon", pi.horizon}, {"table", std::move(steps)}};
}

json constants_to_json(const TheoryConstants& c) {
  return json{{"coarse_c", c.coarse_c},
              {"ides_c_h", c.ides_c_h},
              {"bernstein", c.bernstein},
              {"march_c", c.march_c}};
}

}  // namespace

TabularMdp load_mdp(const std::filesystem::path& path) {
  const json j = read_json(path);
  TabularMdp mdp;
  mdp.num_states = j.at("num_states").get<int>();
  mdp.num_actions = j.at("num_actions").get<int>();
  mdp.horizon = j.at("horizon").get<int>();
  mdp.initial_dist = j.at("initial_dist").get<std::vector<double>>();

  const json& transitions = j.at("transitions");
  const json& rewards = j.at("rewards");
  if (static_cast<int>(transitions.size()) != mdp.horizon ||
      static_cast<int>(rewards.size()) != mdp.horizon)
    throw std::runtime_error("mdp file: transitions/rewards must have horizon entries");
  for (int h = 0; h < mdp.horizon; ++h) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions * mdp.num_states);
    const json& step = transitions.at(h);
    if (static_cast<int>(step.size()) != mdp.num_states)
      throw std::runtime_error("mdp file: transition state dimension mismatch");
    for (const auto& per_state : step) {
      const auto rows =
          flatten2(per_state, mdp.num_actions, mdp.num_states, "mdp transitions");
      flat.insert(flat.end(), rows.begin(), rows.end());
    }
    mdp.transitions.push_back(std::move(flat));
    mdp.rewards.push_back(flatten2(rewards.at(h), mdp.num_states, mdp.num_actions, "mdp rewards"));
  }
  require_valid(mdp);
  return mdp;
}

void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path) {
  json transitions = json::array();
  for (int h = 0; h < mdp.horizon; ++h) {
    json per_step = json::array();
    for (int s = 0; s < mdp.num_states; ++s) {
      const std::size_t offset =
          static_cast<std::size_t>(s) * mdp.num_actions * mdp.num_states;
      per_step.push_back(nest2({mdp.transitions[h].data() + offset,
                                static_cast<std::size_t>(mdp.num_actions) * mdp.num_states},
                               mdp.num_actions, mdp.num_states));
    }
    transitions.push_back(std::move(per_step));
  }
  json rewards = json::array();
  for (int h = 0; h < mdp.horizon; ++h)
    rewards.push_back(nest2(mdp.rewards[h], mdp.num_states, mdp.num_actions));

  write_json(json{{"num_states", mdp.num_states},
                  {"num_actions", mdp.num_actions},
                  {"horizon", mdp.horizon},
                  {"initial_dist", mdp.initial_dist},
                  {"transitions", std::move(transitions)},
                  {"rewards", std::move(rewards)}},
             path);
}

PolicyTable load_policy(const std::filesystem::path& path) {
  return policy_from_json(read_json(path), "policy");
}

std::vector<PolicyTable> load_policies(const std::filesystem::path& path) {
  const json j = read_json(path);
  const json* list = nullptr;
  if (j.is_array())
    list = &j;
  else if (j.contains("policies"))
    list = &j.at("policies");
  std::vector<PolicyTable> policies;
  if (list) {
    for (const auto& entry : *list) policies.push_back(policy_from_json(entry, "policy"));
  } else {
    policies.push_back(policy_from_json(j, "policy"));
  }
  if (policies.empty()) throw std::runtime_error("policies file contains no policies");
  return policies;
}

void save_policies(std::span<const PolicyTable> policies, const std::filesystem::path& path) {
  json list = json::array();
  for (const auto& pi : policies) list.push_back(policy_to_json(pi));
  write_json(json{{"policies", std::move(list)}}, path);
}

void save_report(const EvaluationReport& report, const std::filesystem::path& path) {
  json j{{"mode", report.mode},
         {"epsilon", report.epsilon},
         {"delta", report.delta},
         {"seed", report.seed},
         {"estimates", report.estimates},
         {"phase_counts",
          {{"coarse", report.phases.coarse},
           {"ides", report.phases.ides},
           {"final", report.phases.final_phase},
           {"total", report.phases.total()}}},
         {"constants", constants_to_json(report.constants_used)},
         {"flags",
          {{"solver_converged", report.solver_converged},
           {"iteration_capped", report.iteration_capped},
           {"budget_exceeded", report.budget_exceeded}}}};
  if (report.oracle_values) j["oracle_values"] = *report.oracle_values;
  write_json(j, path);
}

void save_report_csv(const EvaluationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "k,v_hat,v_oracle,abs_err\n";
  out.precision(12);
  for (std::size_t k = 0; k < report.estimates.size(); ++k) {
    out << k << ',' << report.estimates[k] << ',';
    if (report.oracle_values) {
      const double oracle = (*report.oracle_values)[k];
      out << oracle << ',' << std::abs(report.estimates[k] - oracle);
    } else {
      out << ',';
    }
    out << '\n';
  }
}

void save_solution(const SamplingSolution& solution, const std::filesystem::path& path) {
  json mu = json::array();
  for (const auto& step : solution.mu_hat.steps)
    mu.push_back(nest2(step, solution.mu_hat.num_states, solution.mu_hat.num_actions));
  write_json(json{{"alpha", solution.alpha.alpha},
                  {"objective", solution.objective_per_step},
                  {"mu_hat", std::move(mu)}},
             path);
}

TheoryConstants load_constants(const std::filesystem::path& path) {
  const json j = read_json(path);
  TheoryConstants c;
  c.coarse_c = j.value("coarse_c", c.coarse_c);
  c.ides_c_h = j.value("ides_c_h", c.ides_c_h);
  c.bernstein = j.value("bernstein", c.bernstein);
  c.march_c = j.value("march_c", c.march_c);
  return c;
}

void save_constants(const TheoryConstants& constants, const std::filesystem::path& path) {
  write_json(constants_to_json(constants), path);
}

void save_identification(const IdentificationResult& result, double epsilon, double delta,
                         std::uint64_t seed, const std::filesystem::path& path) {
  json rounds = json::array();
  for (const auto& r : result.rounds)
    rounds.push_back(json{{"round", r.round},
                          {"gamma", r.gamma},
                          {"survivors", r.survivors},
                          {"estimates", r.estimates},
                          {"budget", r.trajectories}});
  write_json(json{{"epsilon", epsilon},
                  {"delta", delta},
                  {"seed", seed},
                  {"chosen", result.chosen},
                  {"total_trajectories", result.total_trajectories},
                  {"rounds", std::move(rounds)}},
             path);
}

void dump_trajectories_jsonl(std::span<const std::pair<int, Trajectory>> batch,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& [k, traj] : batch) {
    json steps = json::array();
    for (int h = 0; h < traj.length(); ++h)
      steps.push_back(json::array({traj.states[h], traj.actions[h], traj.rewards[h]}));
    out << json{{"policy_index", k}, {"steps", std::move(steps)}}.dump() << "\n";
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  const json j = read_json(path);
  ExperimentConfig cfg;
  for (const auto& cell_json : j.at("cells")) {
    ExperimentCell cell;
    cell.family = cell_json.at("family").get<std::string>();
    cell.S = cell_json.value("S", cell.S);
    cell.A = cell_json.value("A", cell.A);
    cell.H = cell_json.value("H", cell.H);
    cell.K = cell_json.value("K", cell.K);
    cell.p = cell_json.value("p", cell.p);
    cfg.cells.push_back(cell);
  }
  cfg.epsilons = j.value("epsilons", cfg.epsilons);
  cfg.deltas = j.value("deltas", cfg.deltas);
  cfg.algos = j.value("algos", cfg.algos);
  cfg.repetitions = j.value("repetitions", cfg.repetitions);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.constants_file = j.value("constants_file", cfg.constants_file);
  cfg.budget_cap = j.value("budget_cap", cfg.budget_cap);
  return cfg;
}

}  // namespace caesar
