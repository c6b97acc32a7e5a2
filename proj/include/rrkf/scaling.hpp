#pragma once

#include "rrkf/common.hpp"
#include "rrkf/dlra.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rrkf {

enum class ScalingCase {
  /// Advection: circulant dynamics, no process noise, selection observations.
  best,
  /// 1-D Matern-1/2 with a dense spatial Gram in the diffusion.
  worst,
};

struct ScalingConfig {
  ScalingCase scaling_case = ScalingCase::best;
  std::vector<Index> sizes;
  int repetitions = 5;
  Index rank = 5;
  Index obs_dim = 100;
  DlraConfig dlra;
  std::uint64_t seed = 0;
};

struct ScalingPoint {
  Index n = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  int repetitions = 0;
};

struct ScalingResult {
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  std::vector<std::string> warnings;
};

/// Times a full rank-reduced filter pass per size (problem construction and
/// data generation excluded, one untimed warm-up pass) and fits the log-log
/// slope of the medians.
ScalingResult run_scaling_benchmark(const ScalingConfig& config);

}  // namespace rrkf
