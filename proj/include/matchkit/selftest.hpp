#pragma once

#include <string>
#include <vector>

namespace matchkit {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast checks against closed forms and exhaustive search; a few seconds in
/// total. Exceptions inside a check count as failures.
std::vector<CheckResult> run_selftest();

}  // namespace matchkit
