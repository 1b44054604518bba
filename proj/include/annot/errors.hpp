#ifndef ANNOT_ERRORS_HPP
#define ANNOT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace annot {

// Base class for all pipeline errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or inconsistent configuration (pipeline file, prompt assets, task chaining).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A corpus file path does not match the configured metadata rule.
class MetadataError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures (unwritable journal, missing inputs).
class IoError : public Error {
 public:
  using Error::Error;
};

// Provider response violates the numbered-output grammar.
class MalformedOutput : public Error {
 public:
  explicit MalformedOutput(const std::string& msg, long index = -1)
      : Error(msg), index_(index) {}
  // 1-based index of the offending line, or -1 when structural.
  long index() const { return index_; }

 private:
  long index_;
};

// Transient provider failure: transport error, throttling, truncation.
class RetryableProviderError : public Error {
 public:
  using Error::Error;
};

// Non-recoverable provider failure: bad credentials, rejected request.
class FatalProviderError : public Error {
 public:
  using Error::Error;
};

// Invalid metric computation (empty matrix, mismatched id sets).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Gate evaluated with too few samples.
class GateError : public Error {
 public:
  using Error::Error;
};

// Invalid sampling parameters or infeasible allocation.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Gold/prediction comparison failure (missing labels, unknown ids).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Aggregation failure (instances missing grouping metadata).
class ReportError : public Error {
 public:
  using Error::Error;
};

}  // namespace annot

#endif  // ANNOT_ERRORS_HPP
