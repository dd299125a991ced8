#pragma once

#include <stdexcept>
#include <string>

namespace dwell {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// Malformed system, certificate or gains file. The message carries the
/// offending field path.
class ParseError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A builder needed a matrix (B, E, C, ...) that a mode does not carry.
class MissingMatrix : public Error {
 public:
  using Error::Error;
};

/// Synthesis LMIs were not certified feasible. The message names the
/// maximally violated constraint at the solver's best point.
class NoControllerFound : public Error {
 public:
  using Error::Error;
};

/// A synthesis certificate had a non positive definite S_i(k).
class CertificateDegenerate : public Error {
 public:
  using Error::Error;
};

/// The gain bracket hit its cap without a feasible gamma.
class GainUnboundedOrUnstable : public Error {
 public:
  using Error::Error;
};

}  // namespace dwell
