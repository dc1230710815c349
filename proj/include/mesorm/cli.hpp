#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace mesorm {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitModel = 2, kExitNumerical = 3 };

/// Maps the current exception to the stable exit-code contract.
int exit_code_for_current_exception();

/// Entry point of the `mesorm` executable. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

struct SelfCheck {
  std::string name;
  double tolerance = 0.0;
  /// Returns the measured error; the check passes when it is <= tolerance.
  std::function<double()> measure;
};

struct SelfCheckResult {
  std::string name;
  bool pass = false;
  double error = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
  std::string message;
};

std::vector<SelfCheck> selftest_checks();
/// Runs every check; a name in `corrupt` has its tolerance replaced by -1.
std::vector<SelfCheckResult> run_selftest(const std::vector<std::string>& corrupt = {});

}  // namespace mesorm
