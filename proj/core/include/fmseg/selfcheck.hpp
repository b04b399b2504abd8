#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fmseg {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // worst relative error or deviation observed
  std::string detail;
};

/// Finite-difference checks for every layer kind and both losses over random
/// small tensors; `seeds` independent repetitions each.
std::vector<CheckResult> run_gradient_checks(int seeds = 20, double tolerance = 1e-4);

/// Brute-force cross-checks: feature statistics, split search, F1 counting.
std::vector<CheckResult> run_oracle_checks(std::uint64_t seed = 7);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace fmseg
