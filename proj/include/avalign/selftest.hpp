#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace avalign::kernels {

struct CheckResult {
  std::string kernel;
  std::string check;
  double max_error = 0.0;
  bool pass = false;
};

struct SelftestOptions {
  std::uint64_t seed = 20240901;
  int gradient_draws = 100;
  /// Test-only: corrupt the analytic gradient so the finite-difference check
  /// must fail.
  bool break_gradient = false;
};

/// Runs every kernel against closed-form values and independent scalar
/// oracles.
std::vector<CheckResult> run_selftest(const SelftestOptions& options = {});

bool all_passed(const std::vector<CheckResult>& results);

/// `{"kernel":...,"check":...,"max_error":...,"pass":...}` per line.
void write_jsonl(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace avalign::kernels
