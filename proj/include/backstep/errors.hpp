#pragma once

#include <stdexcept>
#include <string>

namespace backstep {

// Bad arguments or inconsistent inputs (grid mismatch, non-finite data).
class InvalidInputError : public std::runtime_error {
 public:
  explicit InvalidInputError(const std::string& what) : std::runtime_error(what) {}
};

// Query outside the triangular domain 0 <= y <= x <= 1.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Iterative scheme failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_change)
      : std::runtime_error(what), last_change(last_change) {}
  double last_change;
};

// Loss became non-finite during training.
class TrainingDivergenceError : public std::runtime_error {
 public:
  TrainingDivergenceError(const std::string& what, int epoch)
      : std::runtime_error(what), epoch(epoch) {}
  int epoch;
};

// File system failures and malformed persisted artifacts.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class ChecksumError : public IoError {
 public:
  explicit ChecksumError(const std::string& what) : IoError(what) {}
};

class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& what) : IoError(what) {}
};

}  // namespace backstep
