#pragma once

#include <stdexcept>
#include <string>

namespace hsu {

// Base of everything the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad dimensions, out-of-range parameters, malformed flags.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Unreadable/unwritable files and malformed file contents.
class IoError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: non-convergence, infeasible recovery, non-PSD Gram.
class SolverError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace detail
}  // namespace hsu
