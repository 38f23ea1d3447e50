#pragma once

#include <stdexcept>
#include <string>

namespace histoseg {

enum class ErrorKind {
  InvalidInput,      // shape mismatch, non-finite values, mismatched ids
  InvalidParameter,  // loss or config parameter outside its legal range
  EmptyInput,        // nothing scorable (all-ignore masks, empty lists)
  Format,            // malformed file content
  Domain,            // math domain violation (log of non-positive, ...)
  Numeric,           // failed convergence, training divergence
  Io,                // filesystem failure
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

} // namespace histoseg
