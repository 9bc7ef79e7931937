#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "lutkan/error.hpp"

namespace lutkan::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 2,
  kMalformedInput = 3,
  kUnreliable = 4,
  kInternal = 5,
};

int exit_code_for(ErrorKind kind) noexcept;

/// Runs one CLI invocation. `args` excludes the program name. Normal output
/// goes to `out`; a non-zero return is accompanied by exactly one line
/// "error: <kind>: <message>" on `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Closest candidate by edit distance, or empty when nothing is close.
std::string suggest(const std::string& word, const std::vector<std::string>& candidates);

}  // namespace lutkan::cli
