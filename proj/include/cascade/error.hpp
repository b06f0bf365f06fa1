#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

enum class ErrorKind {
  validation,     // spec/config violates an invariant
  capacity,       // lattice, scenario or state count over a cap
  numeric,        // non-finite values, failed optimization
  configuration,  // mismatched inputs (grid sizes, policies)
  conditioning,   // conditioning on a zero-mass event
  recursion,      // level k+1 table missing when level k needs it
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for an error kind (0 ok, 2 validation, 3 capacity, 4 numeric).
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::capacity:
      return 3;
    case ErrorKind::numeric:
      return 4;
    default:
      return 2;
  }
}

}  // namespace cascade
