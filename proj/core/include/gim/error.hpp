#pragma once

#include <stdexcept>
#include <string>

namespace gim {

// Error categories map onto CLI exit codes: usage 1, data 2, numerical 3.
enum class ErrorKind { Usage, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Malformed CSV content; carries the 1-based line number of the offending row.
class RowError : public DataError {
 public:
  RowError(const std::string& path, std::size_t line, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public DataError {
 public:
  enum class Reason { Io, BadMagic, VersionMismatch, Corrupt, ShapeMismatch };
  CheckpointError(Reason reason, const std::string& what) : DataError(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

/// A Markov chain / simulator definition whose distributions do not sum to one.
class ValidationError : public DataError {
 public:
  explicit ValidationError(const std::string& what) : DataError(what) {}
};

}  // namespace gim
