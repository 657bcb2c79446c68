#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace persim {

/// Base class for all persim errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

/// Retryable backend failure: timeout, connection error, HTTP 408/429/5xx.
class TransientBackendError : public BackendError {
 public:
  explicit TransientBackendError(const std::string& what, int status = 0)
      : BackendError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class RetryExhaustedError : public BackendError {
 public:
  RetryExhaustedError(const std::string& what, int attempts)
      : BackendError(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Scripted backend ran out of responses or no rule matched.
class ScriptError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Replay backend found no cassette entry for a request fingerprint.
class ReplayMissError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Pipeline failure annotated with the stage that raised it.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : Error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace persim
