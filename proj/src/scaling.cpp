#include "rrkf/scaling.hpp"

#include "rrkf/filter.hpp"
#include "rrkf/metrics.hpp"
#include "rrkf/problems.hpp"

#include <algorithm>
#include <chrono>

namespace rrkf {

namespace {

Problem scaling_problem(const ScalingConfig& config, Index n) {
  if (config.scaling_case == ScalingCase::best) {
    AdvectionScenario sc;
    sc.n = n;
    sc.obs_count = config.obs_dim;
    sc.obs_every = 5;
    sc.steps = 99;
    sc.seed = config.seed;
    return build_advection(sc);
  }
  MaternScenario sc;
  sc.points = Matrix(n, 1);
  for (Index i = 0; i < n; ++i) sc.points(i, 0) = 10.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  sc.smoothness = 1;
  sc.ell_t = 1.0;
  sc.ell_x = 1.0;
  sc.noise_std = 0.1;
  sc.dt = 0.1;
  sc.steps = 101;
  sc.observation = MaternObservation::random;
  sc.obs_count = config.obs_dim;
  sc.obs_times = 20;
  sc.seed = config.seed;
  return build_matern(sc);
}

}  // namespace

ScalingResult run_scaling_benchmark(const ScalingConfig& config) {
  require(config.sizes.size() >= 2, "scaling benchmark needs at least two sizes to fit a slope");
  require(config.repetitions >= 1, "scaling benchmark needs at least one repetition");
  ScalingResult result;
  std::vector<double> ns, medians;
  for (Index n : config.sizes) {
    require(n >= config.rank && n >= config.obs_dim, "scaling size smaller than rank or observation dimension");
    const Problem problem = scaling_problem(config, n);
    const SqrtGaussian init = problem.rrkf_init(config.rank);
    FilterOptions fo;
    fo.rank = config.rank;
    fo.dlra = config.dlra;
    fo.seed = config.seed;
    fo.store_records = false;
    std::vector<double> times;
    // Rep -1 is an untimed warm-up pass.
    for (int rep = -1; rep < config.repetitions; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      RankReducedFilter filter(*problem.transitions, init, fo);
      for (const Observation& obs : problem.observations) filter.step(obs);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (rep >= 0) times.push_back(ms);
    }
    std::sort(times.begin(), times.end());
    const std::size_t k = times.size();
    const double median = k % 2 ? times[k / 2] : 0.5 * (times[k / 2 - 1] + times[k / 2]);
    result.points.push_back(ScalingPoint{n, median, times.front(), times.back(), config.repetitions});
    if (median < 1.0) result.warnings.push_back("n=" + std::to_string(n) + ": median below 1 ms, timer resolution may dominate");
    ns.push_back(static_cast<double>(n));
    medians.push_back(median);
  }
  result.slope = loglog_slope(ns, medians);
  return result;
}

}  // namespace rrkf
