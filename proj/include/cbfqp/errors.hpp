#pragma once

#include <stdexcept>
#include <string>

namespace cbfqp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch or otherwise malformed problem data.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A certificate, dynamics term or comparison function produced a non-finite
/// value.
class NumericDomainError : public Error {
 public:
  using Error::Error;
};

/// Signals a bug: a state that the piecewise solution does not cover, or a
/// singular multiplier system where the determinant cannot vanish.
class InternalInconsistencyError : public Error {
 public:
  using Error::Error;
};

/// No activity pattern of the two-constraint program is primal/dual feasible.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// A sampled estimate (sup ratio, region of attraction) had no usable sample.
class EstimateUnavailableError : public Error {
 public:
  using Error::Error;
};

/// The confinement radius is undefined for the supplied data.
class BoundUnavailableError : public Error {
 public:
  using Error::Error;
};

/// A nominal controller violated the CLF decrease condition on the
/// verification sample.
class NominalRejectedError : public Error {
 public:
  using Error::Error;
};

/// Unknown scenario name, malformed scenario document, or certificate sanity
/// check failure at load time.
class ScenarioError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its documented domain (for example a
/// boundary test on a state that is not on the boundary).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The data does not determine an answer (for example a vanishing gradient).
class IndeterminateError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbfqp
