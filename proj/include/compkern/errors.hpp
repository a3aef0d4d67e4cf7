#pragma once

#include <stdexcept>
#include <string>

namespace compkern {

// Base of everything the library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad inputs or violated preconditions. The CLI maps this to exit code 2.
struct ValidationError : Error {
  using Error::Error;
};

// Iterations that did not converge, overflow, singular systems. Exit code 3.
struct NumericalError : Error {
  using Error::Error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace compkern
