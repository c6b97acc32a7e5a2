#include "rrkf/scenario_runner.hpp"

#include "rrkf/dense_kf.hpp"
#include "rrkf/ensemble.hpp"
#include "rrkf/filter.hpp"
#include "rrkf/lowrank.hpp"
#include "rrkf/metrics.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <thread>

namespace rrkf {

const char* to_string(Method method) {
  switch (method) {
    case Method::rrkf: return "rrkf";
    case Method::kf: return "kf";
    case Method::enkf: return "enkf";
    case Method::etkf: return "etkf";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "rrkf") return Method::rrkf;
  if (name == "kf") return Method::kf;
  if (name == "enkf") return Method::enkf;
  if (name == "etkf") return Method::etkf;
  throw std::invalid_argument("unknown method '" + name + "'");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// One method under test; exposes its current moments after each step.
struct Runner {
  RunOutcome outcome;
  std::unique_ptr<RankReducedFilter> rrkf;
  std::unique_ptr<EnsembleFilter> ensemble;
  bool is_kf = false;
  Vector mean;
  Matrix factor;
  RmseAccumulator rmse;
  RatioAccumulator cov;

  void step(const Observation& obs) {
    if (rrkf) {
      outcome.total_loglik += rrkf->step(obs).loglik_increment;
    } else if (ensemble) {
      outcome.total_loglik += ensemble->step(obs).loglik_increment;
    }
  }
};

double excess_ratio(const Matrix& factor, Index keep) {
  if (factor.cols() <= keep) return 0.0;
  const Vector d = thin_svd(factor).d;
  if (d.size() <= keep || d(0) == 0.0) return 0.0;
  return d(keep) / d(0);
}

std::vector<RunOutcome> run_group(const Problem& problem, const std::vector<RunSpec>& specs,
                                  const LockstepOptions& options) {
  const Index n = problem.dim();
  std::vector<Runner> runners(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Runner& run = runners[i];
    run.outcome.spec = specs[i];
    try {
      const auto start = Clock::now();
      switch (specs[i].method) {
        case Method::rrkf: {
          require(specs[i].rank > 0 && specs[i].rank <= n, "rrkf rank must lie in [1, n]");
          FilterOptions fo;
          fo.rank = specs[i].rank;
          fo.dlra = options.dlra;
          fo.seed = specs[i].seed;
          fo.store_records = false;
          run.rrkf = std::make_unique<RankReducedFilter>(*problem.transitions, problem.rrkf_init(specs[i].rank), fo);
          break;
        }
        case Method::enkf:
        case Method::etkf: {
          require(specs[i].rank > 1, "ensembles need at least two members");
          EnsembleOptions eo;
          eo.seed = specs[i].seed;
          eo.dlra = options.dlra;
          eo.exact_noise = options.exact_ensemble_noise;
          eo.dense_cap = options.dense_cap;
          eo.store_records = false;
          run.ensemble = std::make_unique<EnsembleFilter>(
              specs[i].method == Method::enkf ? EnsembleKind::enkf : EnsembleKind::etkf, *problem.transitions,
              problem.init_ensemble(specs[i].rank, specs[i].seed), eo);
          break;
        }
        case Method::kf:
          if (n > options.dense_cap) throw CapacityError("kf: state dimension exceeds the dense cap");
          run.is_kf = true;
          run.outcome.spec.rank = n;
          break;
      }
      run.outcome.wall_ms += elapsed_ms(start);
    } catch (const std::exception& e) {
      run.outcome.ok = false;
      run.outcome.error = e.what();
    }
  }

  std::optional<DenseKalmanFilter> reference;
  if (n <= options.dense_cap) {
    DenseFilterOptions dfo;
    dfo.dense_cap = options.dense_cap;
    dfo.store_records = false;
    reference.emplace(*problem.transitions, DenseGaussian{problem.init_mean, problem.init_covariance()}, dfo);
  }
  double reference_ms = 0.0;
  double reference_loglik = 0.0;
  Matrix workspace;

  for (const Observation& obs : problem.observations) {
    const DenseStepRecord* ref = nullptr;
    double ref_norm = 0.0;
    if (reference) {
      const auto start = Clock::now();
      ref = &reference->step(obs);
      reference_ms += elapsed_ms(start);
      reference_loglik += ref->loglik_increment;
      ref_norm = ref->corrected.cov.norm();
    }
    for (Runner& run : runners) {
      if (!run.outcome.ok || run.is_kf) continue;
      try {
        const auto start = Clock::now();
        run.step(obs);
        run.outcome.wall_ms += elapsed_ms(start);
        double step_loglik = 0.0;
        if (run.rrkf) {
          const FilterStepRecord& rec = run.rrkf->last();
          run.mean = rec.corrected.mean;
          run.factor = rec.corrected.cov_factor.matrix();
          step_loglik = rec.loglik_increment;
          if (options.collapse_rank > 0) {
            run.outcome.max_excess_ratio =
                std::max({run.outcome.max_excess_ratio, excess_ratio(run.factor, options.collapse_rank),
                          excess_ratio(rec.predicted.cov_factor.matrix(), options.collapse_rank)});
          }
        } else {
          const EnsembleStepRecord& rec = run.ensemble->last();
          run.mean = ensemble_mean(rec.members);
          run.factor = ensemble_anomalies(rec.members);
          step_loglik = rec.loglik_increment;
        }
        require_finite(run.mean, to_string(run.outcome.spec.method));
        require_finite(run.factor, to_string(run.outcome.spec.method));
        if (options.keep_per_step) run.outcome.step_loglik.push_back(step_loglik);
        if (ref) {
          run.rmse.add(run.mean, ref->corrected.mean);
          const double dist = factor_covariance_distance(run.factor, ref->corrected.cov, &workspace);
          run.cov.add(dist, ref_norm);
          if (options.keep_per_step) {
            run.outcome.step_rmse.push_back((run.mean - ref->corrected.mean).norm() / std::sqrt(double(n)));
            run.outcome.step_mean_norm.push_back(ref->corrected.mean.norm());
            run.outcome.step_cov_rel.push_back(ref_norm > 0.0 ? dist / ref_norm : 0.0);
          }
        }
      } catch (const std::exception& e) {
        run.outcome.ok = false;
        run.outcome.error = e.what();
      }
    }
  }

  std::vector<RunOutcome> out;
  out.reserve(runners.size());
  for (Runner& run : runners) {
    RunOutcome o = std::move(run.outcome);
    if (o.ok && run.is_kf) {
      o.rmse_mean_vs_kf = 0.0;
      o.cov_rel_frob_vs_kf = 0.0;
      o.total_loglik = reference_loglik;
      o.wall_ms = reference_ms;
    } else if (o.ok && reference) {
      o.rmse_mean_vs_kf = run.rmse.value();
      o.cov_rel_frob_vs_kf = run.cov.mean();
      o.cov_excluded = run.cov.excluded();
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace

std::vector<RunOutcome> run_lockstep(const Problem& problem, const std::vector<RunSpec>& specs,
                                     const LockstepOptions& options) {
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(specs.size())));
  if (threads == 1) return run_group(problem, specs, options);

  // Round-robin split; results are put back in spec order.
  std::vector<std::vector<RunSpec>> groups(threads);
  for (std::size_t i = 0; i < specs.size(); ++i) groups[i % threads].push_back(specs[i]);
  std::vector<std::vector<RunOutcome>> results(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        results[t] = run_group(problem, groups[t], options);
      } catch (const std::exception& e) {
        for (const RunSpec& s : groups[t]) {
          RunOutcome o;
          o.spec = s;
          o.ok = false;
          o.error = e.what();
          results[t].push_back(o);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  std::vector<RunOutcome> out(specs.size());
  for (int t = 0; t < threads; ++t)
    for (std::size_t j = 0; j < results[t].size(); ++j) out[j * threads + t] = std::move(results[t][j]);
  return out;
}

}  // namespace rrkf
