#pragma once

#include <string>
#include <vector>

namespace pcfed::selfcheck {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Fast in-process property battery behind the `check` CLI subcommand:
// projection identities, gradient finite-difference spot checks, stream
// replay, schedule values, reduction sanity. Returns one result per check.
std::vector<CheckResult> run_all();

}  // namespace pcfed::selfcheck
