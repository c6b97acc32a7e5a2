#pragma once

#include "rrkf/dlra.hpp"
#include "rrkf/lti_sde.hpp"
#include "rrkf/metrics.hpp"
#include "rrkf/problems.hpp"
#include "rrkf/scaling.hpp"
#include "rrkf/scenario_runner.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rrkf {

/// Invalid experiment configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string scenario;
  std::vector<Method> methods;
  /// Entries <= 0 stand for "n" (full rank), resolved per problem.
  std::vector<Index> ranks;
  /// Seeds per ensemble configuration; deterministic methods run once.
  Index seeds = 20;
  std::uint64_t base_seed = 0;
  DlraConfig dlra;
  Index dense_cap = kDefaultDenseCap;
  bool exact_ensemble_noise = false;
  std::string output_dir = "results";
  /// When false wall_ms is written as 0, making results.csv reproducible
  /// byte for byte.
  bool timing = true;
  int threads = 1;
  /// The scenario's own table, kept verbatim.
  nlohmann::json params = nlohmann::json::object();
  /// Full parsed document, echoed into the manifest.
  nlohmann::json source = nlohmann::json::object();
};

/// Parses and validates a config document. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

struct MetricRow {
  std::string scenario;
  std::string method;
  Index rank = 0;
  std::uint64_t seed = 0;
  double rmse_mean_vs_kf = 0.0;
  double cov_rel_frob_vs_kf = 0.0;
  double total_loglik = 0.0;
  double wall_ms = 0.0;
  bool ok = true;
  std::string error;
};

struct ZScoreRow {
  std::string scenario;
  std::string method;
  Index rank = 0;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::size_t excluded = 0;
  double ks_chi1 = 0.0;
  std::vector<HistogramBin> bins;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<ZScoreRow> zscores;
  /// rank_collapse only: (rank, largest excess singular ratio) per rrkf run.
  std::vector<std::pair<Index, double>> collapse;
  std::optional<ScalingResult> scaling;
  std::size_t failures = 0;
  std::vector<std::string> notes;
};

/// Z-scores of one method's marginals against the problem's truth at every
/// time point: smoothing marginals for rrkf and kf, filtering marginals for
/// the ensembles.
ZScoreRow zscore_run(const Problem& problem, const RunSpec& spec, const ExperimentConfig& config,
                     const std::string& label);

struct LabeledProblem {
  std::string label;
  Problem problem;
  /// rank_collapse: the true rank; 0 otherwise.
  Index true_rank = 0;
};

/// Problems of a filtering scenario (one per swept value). Runtime scenarios
/// have none.
std::vector<LabeledProblem> scenario_problems(const ExperimentConfig& config);

/// Runs the scenario grid in memory.
ExperimentResult execute_experiment(const ExperimentConfig& config);

/// Writes results.csv, summary.csv, run_manifest.json and any
/// scenario-specific tables into config.output_dir.
void write_experiment(const ExperimentConfig& config, const ExperimentResult& result);

/// execute + write; returns the process exit code (0 ok, 2 partial failure).
int run_experiment(const ExperimentConfig& config);

/// Library version string written into manifests.
const char* library_version();

}  // namespace rrkf
