#include "rrkf/experiment.hpp"
#include "rrkf/scaling.hpp"
#include "rrkf/scenario_runner.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rrkf;
using json = nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rrkf_harness_" + name);
  std::filesystem::remove_all(dir);
  return dir.string();
}

json small_advection(const std::string& out) {
  return json{{"scenario", "advection"},
              {"ranks", {5, 10}},
              {"seeds", 3},
              {"timing", false},
              {"output_dir", out},
              {"advection", {{"n", 64}, {"steps", 20}, {"harmonics", 4}, {"wave_period", 64}}}};
}

void expect_config_error(const json& doc, const std::string& fragment) {
  try {
    parse_config(doc);
    ADD_FAILURE() << "accepted: " << doc.dump();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Config, DefaultsPerScenario) {
  const ExperimentConfig c = parse_config(json{{"scenario", "advection"}});
  EXPECT_EQ(c.methods.size(), 4u);
  EXPECT_EQ(c.ranks, (std::vector<Index>{20, 35, 51}));
  EXPECT_EQ(c.seeds, 20);
  const ExperimentConfig m = parse_config(json{{"scenario", "matern_sweep"}, {"ranks", {10, "n"}}});
  EXPECT_EQ(m.ranks, (std::vector<Index>{10, 0}));
}

TEST(Config, FieldDiagnostics) {
  expect_config_error(json::object(), "'scenario'");
  expect_config_error(json{{"scenario", "weather"}}, "'scenario'");
  expect_config_error(json{{"scenario", "advection"}, {"methods", {"ukf"}}}, "'methods'");
  expect_config_error(json{{"scenario", "advection"}, {"ranks", {0}}}, "'ranks'");
  expect_config_error(json{{"scenario", "advection"}, {"rank", {3}}}, "'rank'");
  expect_config_error(json{{"scenario", "advection"}, {"advection", {{"n", "big"}}}}, "'advection.n'");
  expect_config_error(json{{"scenario", "advection"}, {"dlra", {{"k_step", "euler"}}}}, "'dlra.k_step'");
  expect_config_error(json{{"scenario", "runtime_best"}, {"runtime_best", {{"sizes", {1024}}}}}, "'runtime_best.sizes'");
  expect_config_error(json{{"scenario", "zscore"}, {"zscore", {{"grid", {{"dim", 3}}}}}}, "'zscore.grid.dim'");
}

TEST(Config, RanksAboveStateDimensionRejected) {
  json doc = small_advection(temp_dir("rank"));
  doc["ranks"] = {65};
  EXPECT_THROW(execute_experiment(parse_config(doc)), ConfigError);
}

TEST(Lockstep, ReferenceRowsAndFullRank) {
  const Problem p = build_random_lti(RandomLtiScenario{6, 6, 12, 0.1, 0.5, 3});
  LockstepOptions o;
  const auto res = run_lockstep(p,
                                {RunSpec{Method::kf, 0, 0}, RunSpec{Method::rrkf, 6, 0}, RunSpec{Method::rrkf, 2, 0},
                                 RunSpec{Method::enkf, 20, 1}, RunSpec{Method::etkf, 20, 1}},
                                o);
  ASSERT_EQ(res.size(), 5u);
  for (const auto& r : res) ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(res[0].cov_rel_frob_vs_kf, 0.0);
  EXPECT_EQ(res[0].spec.rank, 6);
  EXPECT_LT(res[1].cov_rel_frob_vs_kf, 1e-10);
  EXPECT_LT(res[1].rmse_mean_vs_kf, 1e-10);
  EXPECT_NEAR(res[1].total_loglik, res[0].total_loglik, 1e-8);
  EXPECT_GT(res[2].cov_rel_frob_vs_kf, 1e-3);
  EXPECT_GT(res[3].cov_rel_frob_vs_kf, 0.0);
  EXPECT_TRUE(std::isfinite(res[4].total_loglik));
}

TEST(Lockstep, FailuresAreIsolated) {
  const Problem p = build_random_lti(RandomLtiScenario{5, 3, 6, 0.1, 0.5, 4});
  const auto res = run_lockstep(p, {RunSpec{Method::enkf, 1, 0}, RunSpec{Method::rrkf, 3, 0}}, LockstepOptions{});
  EXPECT_FALSE(res[0].ok);
  EXPECT_FALSE(res[0].error.empty());
  EXPECT_TRUE(res[1].ok);
}

TEST(Lockstep, ThreadCountDoesNotChangeMetrics) {
  const Problem p = build_random_lti(RandomLtiScenario{8, 4, 10, 0.1, 0.5, 5});
  std::vector<RunSpec> specs;
  for (Index r : {2, 4, 8}) specs.push_back(RunSpec{Method::rrkf, r, 0});
  for (std::uint64_t s = 0; s < 3; ++s) specs.push_back(RunSpec{Method::etkf, 6, s});
  LockstepOptions one, three;
  three.threads = 3;
  const auto a = run_lockstep(p, specs, one);
  const auto b = run_lockstep(p, specs, three);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EXPECT_EQ(a[i].spec.rank, b[i].spec.rank);
    EXPECT_EQ(a[i].cov_rel_frob_vs_kf, b[i].cov_rel_frob_vs_kf);
    EXPECT_EQ(a[i].rmse_mean_vs_kf, b[i].rmse_mean_vs_kf);
    EXPECT_EQ(a[i].total_loglik, b[i].total_loglik);
  }
}

TEST(Experiment, WritesDeterministicTables) {
  const std::string dir = temp_dir("adv");
  ExperimentConfig c = parse_config(small_advection(dir));
  EXPECT_EQ(run_experiment(c), 0);
  const std::string first = slurp(std::filesystem::path(dir) / "results.csv");
  std::istringstream lines(first);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "scenario,method,rank,seed,rmse_mean_vs_kf,cov_rel_frob_vs_kf,total_loglik,wall_ms");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  EXPECT_EQ(rows, 2 + 1 + 3 * 2 * 2);

  c.threads = 2;
  EXPECT_EQ(run_experiment(c), 0);
  EXPECT_EQ(slurp(std::filesystem::path(dir) / "results.csv"), first);

  const json manifest = json::parse(slurp(std::filesystem::path(dir) / "run_manifest.json"));
  EXPECT_EQ(manifest["config"]["scenario"], "advection");
  EXPECT_EQ(manifest["seeds_used"].size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(dir) / "summary.csv"));
}

TEST(Experiment, PartialFailureExitCode) {
  json doc = small_advection(temp_dir("partial"));
  doc["ranks"] = {1, 4};
  doc["methods"] = {"rrkf", "enkf"};
  doc["seeds"] = 1;
  const ExperimentConfig c = parse_config(doc);
  EXPECT_EQ(run_experiment(c), 2);
  const json manifest = json::parse(slurp(std::filesystem::path(c.output_dir) / "run_manifest.json"));
  EXPECT_EQ(manifest["failures"].size(), 1u);
  EXPECT_EQ(manifest["failures"][0]["method"], "enkf");
}

TEST(Experiment, RankCollapseAndZscoreTables) {
  const std::string dir = temp_dir("collapse");
  json doc{{"scenario", "rank_collapse"},
           {"output_dir", dir},
           {"ranks", {2, 4}},
           {"rank_collapse", {{"n", 40}, {"true_rank", 2}, {"obs_dim", 5}, {"steps", 6}}}};
  const ExperimentResult r = execute_experiment(parse_config(doc));
  ASSERT_EQ(r.collapse.size(), 2u);
  EXPECT_LT(r.collapse[1].second, 1e-8);

  json z{{"scenario", "zscore"},
         {"ranks", {3, "n"}},
         {"methods", {"rrkf", "kf"}},
         {"zscore", {{"grid", {{"hi", 2.0}}}, {"steps", 30}, {"obs_count", 10}, {"obs_times", 10}}}};
  const ExperimentResult zr = execute_experiment(parse_config(z));
  ASSERT_EQ(zr.zscores.size(), 3u);
  // Full-rank smoother and the dense RTS pass give the same scores.
  EXPECT_NEAR(zr.zscores[1].ks_chi1, zr.zscores[2].ks_chi1, 1e-8);
  EXPECT_EQ(zr.zscores[1].count, 21u * 30u);
}

TEST(Scaling, RejectsSingleSizeAndFitsSlope) {
  ScalingConfig c;
  c.sizes = {256};
  EXPECT_THROW(run_scaling_benchmark(c), std::invalid_argument);
  c.sizes = {128, 256};
  c.repetitions = 1;
  c.obs_dim = 16;
  const ScalingResult r = run_scaling_benchmark(c);
  ASSERT_EQ(r.points.size(), 2u);
  EXPECT_TRUE(std::isfinite(r.slope));
}
