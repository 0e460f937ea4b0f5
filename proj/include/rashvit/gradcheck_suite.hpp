#pragma once

#include <string>
#include <vector>

namespace rashvit {

struct GradCheckResult {
    std::string name;
    double max_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

// Finite-difference verification of every registered backward rule, in double
// precision. When include_broken_fixture is set, an op with a deliberately
// wrong backward is appended; it must show up as a failure (this is how we
// know the harness can actually catch a bad gradient).
std::vector<GradCheckResult> run_grad_checks(bool include_broken_fixture = false);

bool all_pass(const std::vector<GradCheckResult>& results);

}  // namespace rashvit
