#pragma once

#include <stdexcept>
#include <string>

namespace slevolve {

/// Input rejected by a precondition check (dimension mismatch, out-of-domain
/// parameters, malformed documents).
class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to reach its tolerance (quadrature did not
/// converge, root not bracketed, step size underflow).
class numerical_failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw invalid_input(what);
}

}  // namespace detail
}  // namespace slevolve
