#pragma once

#include <stdexcept>
#include <string>

namespace voltvar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON, CSV, manifest).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a model invariant (non-radial graph,
/// dangling reference, bad tap range, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Power flow did not reach the mismatch tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::string worst_node, double mismatch)
      : Error(what), worst_node_(std::move(worst_node)), mismatch_(mismatch) {}

  const std::string& worst_node() const noexcept { return worst_node_; }
  double mismatch() const noexcept { return mismatch_; }

 private:
  std::string worst_node_;
  double mismatch_;
};

/// Least-squares design matrix does not have full column rank.
class RankDeficientError : public Error {
 public:
  using Error::Error;
};

}  // namespace voltvar
