#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace so3denoise {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument: shape mismatch, non-positive sigma, out-of-range parameter.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Cross-covariance is zero, so no alignment rotation is defined.
class AlignmentUndefined : public Error {
 public:
  using Error::Error;
};

/// A pairwise singular-value sum s_i + s_j is too small for the Laplace
/// expansion denominators.
class ExpansionSingular : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature hit its resolution cap before successive estimates
/// agreed. Carries the last two estimates so callers can inspect the gap.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, Eigen::Matrix3d previous,
                Eigen::Matrix3d last)
      : Error(what), previous_(previous), last_(last) {}

  const Eigen::Matrix3d& previous() const { return previous_; }
  const Eigen::Matrix3d& last() const { return last_; }

 private:
  Eigen::Matrix3d previous_;
  Eigen::Matrix3d last_;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-specific.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace so3denoise
