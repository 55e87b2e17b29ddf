#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ceqn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Caller violated a precondition (dimension mismatch, invalid parameter).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The inverse-Hessian operator returned gᵀHg ≤ 0 (up to roundoff) for a
/// nonzero g. Raised by dual-norm evaluation; the driver reacts by swapping in
/// the scaled-identity operator for the current iteration.
class IndefiniteOperator : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw UsageError(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                     ", expected " + std::to_string(want) + ")");
  }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace ceqn
