#ifndef CSFM_ERRORS_HPP_
#define CSFM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace csfm {

// Invalid experiment description or mismatched shapes.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition (stale tape, non-positive variance).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// A loss, gradient or network output became non-finite.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input the operation cannot work on (empty batch, too few points).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// A run directory lacks a file the command needs.
struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace csfm

#endif // CSFM_ERRORS_HPP_
