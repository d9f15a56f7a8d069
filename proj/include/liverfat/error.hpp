#pragma once

#include <stdexcept>
#include <string>

namespace liverfat {

/// Bad input: malformed specs, mismatched grids, degenerate data. Maps to
/// exit code 1 in the CLI.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Failure while running a valid request (I/O, measurement failure). Maps to
/// exit code 2 in the CLI.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace liverfat
