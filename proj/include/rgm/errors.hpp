#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rgm {

/// Caller broke a documented precondition (bad index, shape mismatch, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An action that the environment's current mode forbids.
class IllegalAction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent configuration (conflicting seeds, bad ranges).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Function evaluated outside its domain (e.g. 1/n^2 at n = 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Brute force refused because the search space exceeds its bound.
class SearchSpaceError : public std::runtime_error {
 public:
  SearchSpaceError(const std::string& msg, double bound) : std::runtime_error(msg), bound_(bound) {}
  double bound() const { return bound_; }

 private:
  double bound_;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind {
    Syntax,
    TokenCount,
    InvalidInstance,
    Header,
    DimensionMismatch,
    Checksum,
  };

  ParseError(Kind kind, std::size_t offset, const std::string& msg)
      : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"), kind_(kind), offset_(offset) {}

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

}  // namespace rgm
