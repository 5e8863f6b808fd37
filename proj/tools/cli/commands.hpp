#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace phaselock::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kComputation = 2, kNotConverged = 3 };

/// Fraction of channels whose predicted cluster's majority ground-truth label
/// matches their own label.
double recovery_score(const std::vector<int>& truth, const std::vector<int>& predicted);

/// Runs one command line (without the program name). Human-readable output
/// goes to `out`, diagnostics to `err`; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace phaselock::cli
