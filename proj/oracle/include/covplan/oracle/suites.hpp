#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "covplan/types.hpp"

// Randomized property suites comparing the incremental code paths with the
// dense references. Each case is reproducible from its seed.
namespace covplan::oracle {

struct CaseOutcome {
  bool pass = false;
  double error = 0.0;  // the compared quantity, in the suite's own measure
  std::string detail;
};

struct Suite {
  std::string name;
  double tolerance = 0.0;
  std::function<CaseOutcome(std::uint64_t seed, Index max_n)> run;
};

/// Update, conditional, baseline recovery, IG, additivity and planner suites.
std::vector<Suite> verification_suites();
const Suite& find_suite(const std::string& name);

struct SuiteSummary {
  std::string name;
  int cases = 0;
  int failures = 0;
  double worst = 0.0;
  std::vector<std::uint64_t> failing_seeds;
  std::vector<std::string> failing_details;
};

/// Runs seeds [first, first + count) on up to `threads` workers. Results do
/// not depend on the worker count.
SuiteSummary run_suite(const Suite& suite, std::uint64_t first, int count, Index max_n, int threads = 1);

}  // namespace covplan::oracle
