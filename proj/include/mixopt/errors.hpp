#pragma once

#include <stdexcept>
#include <string>

namespace mixopt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs with inconsistent dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Values outside their documented domain (negative ages, NaNs, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix could not be factorized even after jitter escalation.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, double final_jitter)
      : Error(what), final_jitter_(final_jitter) {}
  double final_jitter() const noexcept { return final_jitter_; }

 private:
  double final_jitter_;
};

/// Hyperparameter optimization failed on every restart.
class FittingError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Bad user configuration, e.g. a GWP table missing an ingredient.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// The feasible design space is empty. `certificate()` names the violated bound.
class ConstraintError : public Error {
 public:
  ConstraintError(const std::string& what, std::string certificate)
      : Error(what + ": " + certificate), certificate_(std::move(certificate)) {}
  const std::string& certificate() const noexcept { return certificate_; }

 private:
  std::string certificate_;
};

/// Malformed CSV / JSON input.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Persisted state does not match its recorded digest or is missing.
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::string digest)
      : Error(what), digest_(std::move(digest)) {}
  const std::string& digest() const noexcept { return digest_; }

 private:
  std::string digest_;
};

/// Store written by an incompatible format version.
class MigrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixopt
