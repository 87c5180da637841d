#pragma once

#include <stdexcept>
#include <string>

namespace pcfed {

// Bad user input: malformed config, invalid dimensions, unreadable files.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Failure while running: numerical blow-up, I/O error mid-run, solver
// divergence. The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pcfed
