#include "rrkf/experiment.hpp"

#include "rrkf/dense_kf.hpp"
#include "rrkf/ensemble.hpp"
#include "rrkf/filter.hpp"
#include "rrkf/problems.hpp"
#include "rrkf/smoother.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace rrkf {

using json = nlohmann::json;

const char* library_version() { return "0.1.0"; }

namespace {

const std::vector<std::string> kScenarios = {"advection", "matern_sweep", "rank_collapse",
                                             "zscore",    "runtime_best", "runtime_worst"};

/// Typed access to one JSON object; remembers which keys were read so
/// leftovers can be reported as unknown fields.
class Table {
 public:
  Table(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "must be a table");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string field = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
    throw ConfigError("config: field '" + field + "' " + what);
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    if (!j_[key].is_number()) fail(key, "must be a number");
    return j_[key].get<double>();
  }
  double positive(const std::string& key, double def) {
    const double v = number(key, def);
    if (!(v > 0.0)) fail(key, "must be positive");
    return v;
  }
  Index integer(const std::string& key, Index def, Index min = 0) {
    if (!has(key)) return def;
    if (!j_[key].is_number_integer()) fail(key, "must be an integer");
    const auto v = j_[key].get<long long>();
    if (v < min) fail(key, "must be at least " + std::to_string(min));
    return static_cast<Index>(v);
  }
  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    if (!j_[key].is_boolean()) fail(key, "must be true or false");
    return j_[key].get<bool>();
  }
  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    if (!j_[key].is_string()) fail(key, "must be a string");
    return j_[key].get<std::string>();
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    if (!has(key)) return def;
    if (!j_[key].is_array() || j_[key].empty()) fail(key, "must be a non-empty list of numbers");
    std::vector<double> out;
    for (const auto& v : j_[key]) {
      if (!v.is_number()) fail(key, "must be a non-empty list of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  Table sub(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return Table(j_.contains(key) ? j_[key] : empty, path_.empty() ? key : path_ + "." + key);
  }
  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_[key];
  }
  void ignore(const std::string& key) { used_.insert(key); }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) fail(item.key(), "is not a recognized setting");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::uint64_t table_seed(Table& t, std::uint64_t base) {
  return static_cast<std::uint64_t>(t.integer("seed", static_cast<Index>(base)));
}

AdvectionScenario advection_params(const json& j, std::uint64_t base_seed) {
  Table t(j, "advection");
  AdvectionScenario sc;
  sc.n = t.integer("n", sc.n, 2);
  sc.velocity = t.number("velocity", sc.velocity);
  sc.dt = t.positive("dt", sc.dt);
  sc.dx = t.positive("dx", sc.dx);
  sc.obs_every = t.integer("obs_every", sc.obs_every, 1);
  sc.obs_count = t.integer("obs_count", sc.obs_count, 1);
  sc.noise_std = t.positive("noise_std", sc.noise_std);
  sc.steps = t.integer("steps", sc.steps, 1);
  sc.harmonics = t.integer("harmonics", sc.harmonics, 0);
  sc.wave_period = t.positive("wave_period", sc.wave_period);
  sc.init_members = t.integer("init_members", sc.init_members, 0);
  sc.seed = table_seed(t, base_seed);
  t.finish();
  if (sc.obs_count > sc.n) t.fail("obs_count", "must not exceed n");
  return sc;
}

Matrix grid_params(Table t, double lo, double hi, double spacing, int dim) {
  lo = t.number("lo", lo);
  hi = t.number("hi", hi);
  spacing = t.positive("spacing", spacing);
  dim = static_cast<int>(t.integer("dim", dim, 1));
  t.finish();
  if (!(hi > lo)) t.fail("hi", "must exceed lo");
  if (dim > 2) t.fail("dim", "must be 1 or 2");
  return uniform_grid(lo, hi, spacing, dim);
}

void matern_common(Table& t, MaternScenario& sc) {
  sc.smoothness = static_cast<int>(t.integer("smoothness", sc.smoothness, 1));
  if (sc.smoothness != 1 && sc.smoothness != 3 && sc.smoothness != 5) t.fail("smoothness", "must be 1, 3 or 5 (2 nu)");
  sc.ell_t = t.positive("ell_t", sc.ell_t);
  sc.sigma_t = t.positive("sigma_t", sc.sigma_t);
  sc.sigma_x = t.positive("sigma_x", sc.sigma_x);
  sc.noise_std = t.positive("noise_std", sc.noise_std);
  sc.dt = t.positive("dt", sc.dt);
  sc.t0 = t.number("t0", sc.t0);
  sc.steps = t.integer("steps", sc.steps, 1);
}

struct SweepParams {
  MaternScenario base;
  std::vector<double> ell_x;
};

SweepParams sweep_params(const json& j, std::uint64_t base_seed) {
  Table t(j, "matern_sweep");
  SweepParams p;
  p.base.points = grid_params(t.sub("grid"), 0.0, 2.0, 0.1, 2);
  p.base.ell_t = 1.0;
  p.base.noise_std = 0.5;
  p.base.t0 = 0.1;
  p.base.steps = 100;
  matern_common(t, p.base);
  p.base.seed = table_seed(t, base_seed);
  p.ell_x = t.numbers("ell_x", {0.01, 0.1, 0.25, 1.0});
  for (double v : p.ell_x)
    if (!(v > 0.0)) t.fail("ell_x", "entries must be positive");
  t.finish();
  return p;
}

MaternScenario zscore_params(const json& j, std::uint64_t base_seed) {
  Table t(j, "zscore");
  MaternScenario sc;
  sc.points = grid_params(t.sub("grid"), 0.0, 20.0, 0.1, 1);
  sc.ell_t = 1.0;
  sc.ell_x = 1.0;
  sc.noise_std = 0.1;
  sc.t0 = 0.0;
  sc.steps = 501;
  matern_common(t, sc);
  sc.ell_x = t.positive("ell_x", sc.ell_x);
  sc.observation = MaternObservation::random;
  sc.obs_count = t.integer("obs_count", 150, 1);
  sc.obs_times = t.integer("obs_times", 100, 1);
  sc.seed = table_seed(t, base_seed);
  t.finish();
  if (sc.obs_count > sc.points.rows()) t.fail("obs_count", "must not exceed the number of grid points");
  if (sc.obs_times > sc.steps) t.fail("obs_times", "must not exceed steps");
  return sc;
}

RankCollapseScenario collapse_params(const json& j, std::uint64_t base_seed) {
  Table t(j, "rank_collapse");
  RankCollapseScenario sc;
  sc.n = t.integer("n", sc.n, 2);
  sc.true_rank = t.integer("true_rank", sc.true_rank, 1);
  sc.obs_dim = t.integer("obs_dim", sc.obs_dim, 1);
  sc.steps = t.integer("steps", sc.steps, 1);
  sc.dt = t.positive("dt", sc.dt);
  sc.noise_std = t.positive("noise_std", sc.noise_std);
  sc.complement_decay = t.positive("complement_decay", sc.complement_decay);
  sc.seed = table_seed(t, base_seed);
  t.finish();
  if (sc.true_rank > sc.n) t.fail("true_rank", "must not exceed n");
  if (sc.obs_dim > sc.n) t.fail("obs_dim", "must not exceed n");
  return sc;
}

ScalingConfig runtime_params(const json& j, const std::string& name, std::uint64_t base_seed) {
  Table t(j, name);
  ScalingConfig sc;
  const bool best = name == "runtime_best";
  sc.scaling_case = best ? ScalingCase::best : ScalingCase::worst;
  const std::vector<double> def = best ? std::vector<double>{1024, 2048, 4096, 8192, 16384}
                                       : std::vector<double>{256, 512, 1024, 2048};
  for (double v : t.numbers("sizes", def)) {
    if (v < 1 || v != std::floor(v)) t.fail("sizes", "entries must be positive integers");
    sc.sizes.push_back(static_cast<Index>(v));
  }
  if (sc.sizes.size() < 2) t.fail("sizes", "needs at least two entries to fit a slope");
  sc.repetitions = static_cast<int>(t.integer("repetitions", 5, 1));
  sc.obs_dim = t.integer("obs_dim", sc.obs_dim, 1);
  sc.seed = table_seed(t, base_seed);
  t.finish();
  for (Index n : sc.sizes)
    if (n < sc.obs_dim) t.fail("sizes", "entries must be at least obs_dim");
  return sc;
}

std::vector<Method> default_methods(const std::string& scenario) {
  if (scenario == "rank_collapse") return {Method::rrkf, Method::kf};
  if (scenario == "runtime_best" || scenario == "runtime_worst") return {Method::rrkf};
  return {Method::rrkf, Method::kf, Method::enkf, Method::etkf};
}

std::vector<Index> default_ranks(const std::string& scenario) {
  if (scenario == "advection") return {20, 35, 51};
  if (scenario == "matern_sweep") return {10, 50, 150, 0};
  if (scenario == "rank_collapse") return {3, 7, 11};
  if (scenario == "zscore") return {10, 50, 0};
  return {5};
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<RunSpec> make_specs(const ExperimentConfig& config, Index n) {
  std::vector<Index> ranks;
  for (Index r : config.ranks) {
    const Index resolved = r <= 0 ? n : r;
    if (resolved > n) throw ConfigError("config: field 'ranks' entry " + std::to_string(r) + " exceeds n = " + std::to_string(n));
    if (std::find(ranks.begin(), ranks.end(), resolved) == ranks.end()) ranks.push_back(resolved);
  }
  std::vector<RunSpec> specs;
  for (Method m : config.methods) {
    if (m == Method::kf) {
      specs.push_back(RunSpec{m, n, config.base_seed});
      continue;
    }
    for (Index r : ranks) {
      if (m == Method::rrkf) {
        specs.push_back(RunSpec{m, r, config.base_seed});
      } else {
        for (Index s = 0; s < config.seeds; ++s) specs.push_back(RunSpec{m, r, config.base_seed + static_cast<std::uint64_t>(s)});
      }
    }
  }
  return specs;
}

LockstepOptions lockstep_options(const ExperimentConfig& config) {
  LockstepOptions o;
  o.dense_cap = config.dense_cap;
  o.dlra = config.dlra;
  o.exact_ensemble_noise = config.exact_ensemble_noise;
  o.threads = config.threads;
  return o;
}

void append_rows(const std::string& label, const std::vector<RunOutcome>& outcomes, ExperimentResult& result) {
  for (const RunOutcome& o : outcomes) {
    MetricRow row;
    row.scenario = label;
    row.method = to_string(o.spec.method);
    row.rank = o.spec.rank;
    row.seed = o.spec.seed;
    row.ok = o.ok;
    row.error = o.error;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.rmse_mean_vs_kf = o.ok ? o.rmse_mean_vs_kf : nan;
    row.cov_rel_frob_vs_kf = o.ok ? o.cov_rel_frob_vs_kf : nan;
    row.total_loglik = o.ok ? o.total_loglik : nan;
    row.wall_ms = o.ok ? o.wall_ms : nan;
    if (!o.ok) ++result.failures;
    if (o.cov_excluded > 0)
      result.notes.push_back(label + " " + row.method + " r=" + std::to_string(row.rank) + ": " +
                             std::to_string(o.cov_excluded) + " steps with a zero reference covariance excluded");
    result.rows.push_back(std::move(row));
  }
}

void finish_zscores(ZScoreRow& row, const ZScores& z) {
  row.count = z.scores.size();
  row.excluded = z.excluded;
  row.ks_chi1 = ks_statistic_chi1(z.scores);
  std::vector<double> mags;
  mags.reserve(z.scores.size());
  for (double s : z.scores) mags.push_back(std::abs(s));
  row.bins = histogram(mags, 0.0, 5.0, 20);
}

}  // namespace

ZScoreRow zscore_run(const Problem& problem, const RunSpec& spec, const ExperimentConfig& config,
                     const std::string& label) {
  ZScoreRow row;
  row.scenario = label;
  row.method = to_string(spec.method);
  row.rank = spec.rank;
  row.seed = spec.seed;
  ZScores z;
  switch (spec.method) {
    case Method::rrkf: {
      FilterOptions fo;
      fo.rank = spec.rank;
      fo.dlra = config.dlra;
      fo.seed = spec.seed;
      const FilterTrace trace = filter_pass(*problem.transitions, problem.observations, problem.rrkf_init(spec.rank), fo);
      const auto marginals = smooth_pass(trace);
      for (std::size_t l = 0; l < marginals.size(); ++l)
        metric_zscores(marginals[l].mean, marginals[l].cov_factor.marginal_variances().cwiseSqrt(),
                       problem.truth.col(static_cast<Index>(l)), z);
      break;
    }
    case Method::kf: {
      DenseFilterOptions dfo;
      dfo.dense_cap = config.dense_cap;
      const DenseTrace trace = dense_kf_pass(*problem.transitions, problem.observations,
                                             DenseGaussian{problem.init_mean, problem.init_covariance()}, dfo);
      const auto marginals = dense_rts_pass(trace);
      for (std::size_t l = 0; l < marginals.size(); ++l)
        metric_zscores(marginals[l].mean, marginals[l].cov.diagonal().cwiseMax(0.0).cwiseSqrt(),
                       problem.truth.col(static_cast<Index>(l)), z);
      break;
    }
    case Method::enkf:
    case Method::etkf: {
      // Ensembles only provide filtering marginals.
      EnsembleOptions eo;
      eo.seed = spec.seed;
      eo.dlra = config.dlra;
      eo.exact_noise = config.exact_ensemble_noise;
      eo.dense_cap = config.dense_cap;
      const Matrix init = problem.init_ensemble(spec.rank, spec.seed);
      const EnsembleTrace trace = spec.method == Method::enkf
                                      ? enkf_pass(*problem.transitions, problem.observations, init, eo)
                                      : etkf_pass(*problem.transitions, problem.observations, init, eo);
      for (std::size_t l = 0; l < trace.records.size(); ++l) {
        const Matrix& members = trace.records[l].members;
        metric_zscores(ensemble_mean(members), ensemble_anomalies(members).rowwise().norm(),
                       problem.truth.col(static_cast<Index>(l)), z);
      }
      break;
    }
  }
  finish_zscores(row, z);
  return row;
}

ExperimentConfig parse_config(const json& doc) {
  Table t(doc, "");
  ExperimentConfig c;
  c.source = doc;
  c.scenario = t.string("scenario", "");
  if (c.scenario.empty()) t.fail("scenario", "is required");
  if (std::find(kScenarios.begin(), kScenarios.end(), c.scenario) == kScenarios.end())
    t.fail("scenario", "must be one of advection, matern_sweep, rank_collapse, zscore, runtime_best, runtime_worst");

  c.methods = default_methods(c.scenario);
  if (t.has("methods")) {
    const json& m = t.raw("methods");
    if (!m.is_array() || m.empty()) t.fail("methods", "must be a non-empty list");
    c.methods.clear();
    for (const auto& v : m) {
      if (!v.is_string()) t.fail("methods", "entries must be strings");
      try {
        const Method method = parse_method(v.get<std::string>());
        if (std::find(c.methods.begin(), c.methods.end(), method) == c.methods.end()) c.methods.push_back(method);
      } catch (const std::invalid_argument& e) {
        t.fail("methods", e.what());
      }
    }
  }
  c.ranks = default_ranks(c.scenario);
  if (t.has("ranks")) {
    const json& r = t.raw("ranks");
    if (!r.is_array() || r.empty()) t.fail("ranks", "must be a non-empty list");
    c.ranks.clear();
    for (const auto& v : r) {
      if (v.is_string() && v.get<std::string>() == "n") {
        c.ranks.push_back(0);
      } else if (v.is_number_integer() && v.get<long long>() > 0) {
        c.ranks.push_back(static_cast<Index>(v.get<long long>()));
      } else {
        t.fail("ranks", "entries must be positive integers or \"n\"");
      }
    }
  }
  c.seeds = t.integer("seeds", c.seeds, 1);
  c.base_seed = static_cast<std::uint64_t>(t.integer("base_seed", 0));
  {
    Table d = t.sub("dlra");
    c.dlra.substeps = d.integer("substeps", c.dlra.substeps, 1);
    c.dlra.rk4_substeps = d.integer("rk4_substeps", c.dlra.rk4_substeps, 1);
    const std::string k = d.string("k_step", "rk4");
    if (k == "rk4") c.dlra.k_step = KStepMethod::rk4;
    else if (k == "exponential") c.dlra.k_step = KStepMethod::exponential;
    else d.fail("k_step", "must be \"rk4\" or \"exponential\"");
    c.dlra.reuse_basis = d.boolean("reuse_basis", c.dlra.reuse_basis);
    d.finish();
  }
  c.dense_cap = t.integer("dense_cap", c.dense_cap, 1);
  c.exact_ensemble_noise = t.boolean("exact_ensemble_noise", c.exact_ensemble_noise);
  c.output_dir = t.string("output_dir", c.output_dir);
  c.timing = t.boolean("timing", c.timing);
  c.threads = static_cast<int>(t.integer("threads", c.threads, 1));

  // Validate the active scenario's table; tables for other scenarios may be
  // present and are ignored.
  for (const std::string& name : kScenarios) t.ignore(name);
  const json params = doc.contains(c.scenario) ? doc[c.scenario] : json::object();
  c.params = params;
  if (c.scenario == "advection") advection_params(params, c.base_seed);
  if (c.scenario == "matern_sweep") sweep_params(params, c.base_seed);
  if (c.scenario == "rank_collapse") collapse_params(params, c.base_seed);
  if (c.scenario == "zscore") zscore_params(params, c.base_seed);
  if (c.scenario == "runtime_best" || c.scenario == "runtime_worst") {
    runtime_params(params, c.scenario, c.base_seed);
    if (c.ranks.size() != 1 || c.ranks[0] <= 0) t.fail("ranks", "must hold a single positive rank for runtime scenarios");
    if (c.methods.size() != 1 || c.methods[0] != Method::rrkf) t.fail("methods", "runtime scenarios only time rrkf");
  }
  t.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return parse_config(doc);
}

std::vector<LabeledProblem> scenario_problems(const ExperimentConfig& config) {
  std::vector<LabeledProblem> out;
  const std::string& s = config.scenario;
  if (s == "advection") {
    out.push_back({s, build_advection(advection_params(config.params, config.base_seed)), 0});
  } else if (s == "matern_sweep") {
    const SweepParams p = sweep_params(config.params, config.base_seed);
    for (double ell : p.ell_x) {
      MaternScenario sc = p.base;
      sc.ell_x = ell;
      out.push_back({s + "[ell_x=" + fmt_short(ell) + "]", build_matern(sc), 0});
    }
  } else if (s == "rank_collapse") {
    const RankCollapseScenario sc = collapse_params(config.params, config.base_seed);
    out.push_back({s, build_rank_collapse(sc), sc.true_rank});
  } else if (s == "zscore") {
    out.push_back({s, build_matern(zscore_params(config.params, config.base_seed)), 0});
  }
  return out;
}

ExperimentResult execute_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  const std::string& s = config.scenario;
  if (s == "runtime_best" || s == "runtime_worst") {
    ScalingConfig sc = runtime_params(config.params, s, config.base_seed);
    sc.rank = config.ranks.front();
    sc.dlra = config.dlra;
    result.scaling = run_scaling_benchmark(sc);
    for (const auto& w : result.scaling->warnings) result.notes.push_back(w);
  }
  for (const LabeledProblem& lp : scenario_problems(config)) {
    const auto specs = make_specs(config, lp.problem.dim());
    LockstepOptions o = lockstep_options(config);
    o.collapse_rank = lp.true_rank;
    const auto outcomes = run_lockstep(lp.problem, specs, o);
    if (lp.true_rank > 0)
      for (const RunOutcome& out : outcomes)
        if (out.ok && out.spec.method == Method::rrkf) result.collapse.emplace_back(out.spec.rank, out.max_excess_ratio);
    append_rows(lp.label, outcomes, result);
    if (s == "zscore") {
      for (const RunSpec& spec : specs) {
        try {
          result.zscores.push_back(zscore_run(lp.problem, spec, config, lp.label));
        } catch (const std::exception& e) {
          ++result.failures;
          result.notes.push_back(std::string("zscore ") + to_string(spec.method) + " r=" + std::to_string(spec.rank) +
                                 ": " + e.what());
        }
      }
    }
  }
  if (!config.timing)
    for (MetricRow& row : result.rows)
      if (row.ok) row.wall_ms = 0.0;
  return result;
}

namespace {

struct Stats {
  double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return Stats{NAN, NAN, NAN, NAN};
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void write_experiment(const ExperimentConfig& config, const ExperimentResult& result) {
  namespace fs = std::filesystem;
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  std::vector<std::string> outputs;

  {
    auto out = open_out(dir / "results.csv");
    out << "scenario,method,rank,seed,rmse_mean_vs_kf,cov_rel_frob_vs_kf,total_loglik,wall_ms\n";
    for (const MetricRow& r : result.rows)
      out << r.scenario << ',' << r.method << ',' << r.rank << ',' << r.seed << ',' << fmt(r.rmse_mean_vs_kf) << ','
          << fmt(r.cov_rel_frob_vs_kf) << ',' << fmt(r.total_loglik) << ',' << fmt(r.wall_ms) << '\n';
    outputs.push_back("results.csv");
  }
  {
    // Group keys in first-appearance order.
    std::vector<std::tuple<std::string, std::string, Index>> keys;
    std::map<std::tuple<std::string, std::string, Index>, std::vector<const MetricRow*>> groups;
    for (const MetricRow& r : result.rows) {
      auto key = std::make_tuple(r.scenario, r.method, r.rank);
      if (!groups.count(key)) keys.push_back(key);
      groups[key].push_back(&r);
    }
    auto out = open_out(dir / "summary.csv");
    out << "scenario,method,rank,count,failed";
    for (const char* m : {"rmse_mean_vs_kf", "cov_rel_frob_vs_kf", "total_loglik", "wall_ms"})
      for (const char* s : {"mean", "std", "min", "max"}) out << ',' << m << '_' << s;
    out << '\n';
    for (const auto& key : keys) {
      const auto& rows = groups[key];
      std::vector<double> cols[4];
      std::size_t failed = 0;
      for (const MetricRow* r : rows) {
        if (!r->ok) {
          ++failed;
          continue;
        }
        cols[0].push_back(r->rmse_mean_vs_kf);
        cols[1].push_back(r->cov_rel_frob_vs_kf);
        cols[2].push_back(r->total_loglik);
        cols[3].push_back(r->wall_ms);
      }
      out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << rows.size() - failed
          << ',' << failed;
      for (const auto& c : cols) {
        const Stats st = stats(c);
        out << ',' << fmt(st.mean) << ',' << fmt(st.std) << ',' << fmt(st.min) << ',' << fmt(st.max);
      }
      out << '\n';
    }
    outputs.push_back("summary.csv");
  }
  if (!result.zscores.empty()) {
    auto out = open_out(dir / "zscore.csv");
    out << "scenario,method,rank,seed,count,excluded,ks_chi1\n";
    for (const ZScoreRow& z : result.zscores)
      out << z.scenario << ',' << z.method << ',' << z.rank << ',' << z.seed << ',' << z.count << ',' << z.excluded
          << ',' << fmt(z.ks_chi1) << '\n';
    auto hist = open_out(dir / "zscore_hist.csv");
    hist << "scenario,method,rank,seed,abs_z_lo,abs_z_hi,count\n";
    for (const ZScoreRow& z : result.zscores)
      for (const HistogramBin& b : z.bins)
        hist << z.scenario << ',' << z.method << ',' << z.rank << ',' << z.seed << ',' << fmt(b.lo) << ','
             << fmt(b.hi) << ',' << b.count << '\n';
    outputs.push_back("zscore.csv");
    outputs.push_back("zscore_hist.csv");
  }
  if (!result.collapse.empty()) {
    auto out = open_out(dir / "collapse.csv");
    out << "scenario,rank,max_excess_singular_ratio\n";
    for (const auto& [rank, ratio] : result.collapse) out << config.scenario << ',' << rank << ',' << fmt(ratio) << '\n';
    outputs.push_back("collapse.csv");
  }
  json scaling = nullptr;
  if (result.scaling) {
    auto out = open_out(dir / "timing.csv");
    out << "scenario,n,median_ms,min_ms,max_ms,repetitions\n";
    for (const ScalingPoint& p : result.scaling->points)
      out << config.scenario << ',' << p.n << ',' << fmt(config.timing ? p.median_ms : 0.0) << ','
          << fmt(config.timing ? p.min_ms : 0.0) << ',' << fmt(config.timing ? p.max_ms : 0.0) << ','
          << p.repetitions << '\n';
    outputs.push_back("timing.csv");
    scaling = {{"loglog_slope", result.scaling->slope}, {"warnings", result.scaling->warnings}};
  }

  json failures = json::array();
  std::set<std::uint64_t> seeds;
  for (const MetricRow& r : result.rows) {
    seeds.insert(r.seed);
    if (!r.ok)
      failures.push_back({{"scenario", r.scenario}, {"method", r.method}, {"rank", r.rank}, {"seed", r.seed},
                          {"error", r.error}});
  }
  json methods = json::array();
  for (Method m : config.methods) methods.push_back(to_string(m));
  json manifest = {
      {"library_version", library_version()},
      {"config", config.source},
      {"resolved",
       {{"scenario", config.scenario},
        {"methods", methods},
        {"ranks", config.ranks},
        {"seeds", config.seeds},
        {"base_seed", config.base_seed},
        {"dense_cap", config.dense_cap},
        {"exact_ensemble_noise", config.exact_ensemble_noise},
        {"threads", config.threads},
        {"timing", config.timing},
        {"dlra",
         {{"substeps", config.dlra.substeps},
          {"rk4_substeps", config.dlra.rk4_substeps},
          {"k_step", config.dlra.k_step == KStepMethod::rk4 ? "rk4" : "exponential"},
          {"reuse_basis", config.dlra.reuse_basis}}},
        {"params", config.params}}},
      {"seeds_used", std::vector<std::uint64_t>(seeds.begin(), seeds.end())},
      {"rows", result.rows.size()},
      {"failures", failures},
      {"notes", result.notes},
      {"scaling", scaling},
      {"outputs", outputs},
  };
  auto out = open_out(dir / "run_manifest.json");
  out << manifest.dump(2) << '\n';
}

int run_experiment(const ExperimentConfig& config) {
  const ExperimentResult result = execute_experiment(config);
  write_experiment(config, result);
  return result.failures > 0 ? 2 : 0;
}

}  // namespace rrkf
