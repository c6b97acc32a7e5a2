// Command-line front end for experiments, benchmarks and dataset export.

#include "rrkf/acceptance.hpp"
#include "rrkf/dataset.hpp"
#include "rrkf/experiment.hpp"
#include "rrkf/problems.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace rrkf;
using json = nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> ranks;
  std::vector<std::string> methods;
};

/// Loads the config file (or a bare {"scenario": default}) and applies the
/// command-line overrides before validation.
ExperimentConfig resolve(const Overrides& o, const std::string& default_scenario) {
  json doc = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("config: cannot open '" + o.config + "'");
    try {
      doc = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError("config: " + o.config + ": " + e.what());
    }
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be a table");
  if (!doc.contains("scenario") && !default_scenario.empty()) doc["scenario"] = default_scenario;
  if (!o.out.empty()) doc["output_dir"] = o.out;
  if (o.seed) doc["base_seed"] = *o.seed;
  if (o.threads) doc["threads"] = *o.threads;
  if (!o.ranks.empty()) {
    json ranks = json::array();
    for (const std::string& r : o.ranks) {
      if (r == "n") {
        ranks.push_back("n");
        continue;
      }
      try {
        std::size_t used = 0;
        const long long v = std::stoll(r, &used);
        if (used != r.size()) throw std::invalid_argument(r);
        ranks.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError("--rank: '" + r + "' is not an integer or 'n'");
      }
    }
    doc["ranks"] = ranks;
  }
  if (!o.methods.empty()) doc["methods"] = o.methods;
  return parse_config(doc);
}

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "JSON experiment config");
  if (config_required) c->required();
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Base seed");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--rank", o.ranks, "Rank list (integers or n)")->delimiter(',');
  cmd->add_option("--method", o.methods, "Method list: rrkf, kf, enkf, etkf")->delimiter(',');
}

int report(const ExperimentConfig& config, const ExperimentResult& result) {
  write_experiment(config, result);
  std::cout << "wrote " << result.rows.size() << " rows to " << config.output_dir << "\n";
  if (result.scaling) {
    for (const auto& p : result.scaling->points)
      std::cout << "  n=" << p.n << " median " << p.median_ms << " ms\n";
    std::cout << "  log-log slope " << result.scaling->slope << "\n";
  }
  for (const auto& note : result.notes) std::cerr << "note: " << note << "\n";
  if (result.failures > 0) {
    std::cerr << result.failures << " run(s) failed; see run_manifest.json\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank-reduced Kalman filtering experiments"};
  app.require_subcommand(1);

  Overrides run_opts, bench_opts, export_opts;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  add_common(run, run_opts, true);

  auto* bench = app.add_subcommand("bench", "Wall-clock scaling benchmark");
  add_common(bench, bench_opts, false);
  std::string bench_case = "best";
  bench->add_option("--case", bench_case, "best or worst")->check(CLI::IsMember({"best", "worst"}));

  auto* verify = app.add_subcommand("verify", "Run the acceptance suite");
  std::vector<int> criteria;
  int verify_threads = 1;
  verify->add_option("--criterion", criteria, "Criteria to run (default all)")->delimiter(',')->check(
      CLI::Range(1, kCriterionCount));
  verify->add_option("--threads", verify_threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* exp = app.add_subcommand("export-data", "Write a scenario's observations and truth as CSV");
  add_common(exp, export_opts, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const ExperimentConfig config = resolve(run_opts, "");
      return report(config, execute_experiment(config));
    }
    if (bench->parsed()) {
      const ExperimentConfig config = resolve(bench_opts, bench_case == "best" ? "runtime_best" : "runtime_worst");
      if (config.scenario != "runtime_best" && config.scenario != "runtime_worst")
        throw ConfigError("config: field 'scenario' must be runtime_best or runtime_worst for bench");
      return report(config, execute_experiment(config));
    }
    if (verify->parsed()) {
      if (criteria.empty())
        for (int i = 1; i <= kCriterionCount; ++i) criteria.push_back(i);
      AcceptanceOptions options;
      options.threads = verify_threads;
      options.log = &std::cerr;
      bool all = true;
      const auto results = run_acceptance(criteria, options);
      for (const auto& r : results) {
        std::cout << format_result(r) << "\n";
        all = all && r.passed;
      }
      return all ? 0 : 2;
    }
    if (exp->parsed()) {
      const ExperimentConfig config = resolve(export_opts, "");
      const auto problems = scenario_problems(config);
      if (problems.empty()) throw ConfigError("config: field 'scenario' has no dataset to export");
      std::filesystem::create_directories(config.output_dir);
      const auto dir = std::filesystem::path(config.output_dir);
      for (const auto& lp : problems) {
        std::string stem = lp.label;
        for (char& ch : stem)
          if (ch == '[' || ch == ']' || ch == '=') ch = '_';
        export_dataset((dir / (stem + "_observations.csv")).string(), lp.problem.observations);
        std::vector<double> times;
        for (const auto& o : lp.problem.observations) times.push_back(o.time);
        export_trajectory((dir / (stem + "_truth.csv")).string(), times, lp.problem.truth);
        std::cout << "wrote " << stem << "_observations.csv and " << stem << "_truth.csv\n";
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
