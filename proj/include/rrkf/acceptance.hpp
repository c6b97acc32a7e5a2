#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rrkf {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  int threads = 1;
  /// Progress messages; null for silence.
  std::ostream* log = nullptr;
};

constexpr int kCriterionCount = 10;

const char* criterion_name(int id);

/// Runs one acceptance criterion (1..10). Exceptions count as failures.
CriterionResult run_criterion(int id, const AcceptanceOptions& options);

std::vector<CriterionResult> run_acceptance(const std::vector<int>& ids, const AcceptanceOptions& options);

/// "criterion N [PASS|FAIL] name (seconds): detail"
std::string format_result(const CriterionResult& result);

}  // namespace rrkf
