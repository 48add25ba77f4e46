#pragma once

#include <stdexcept>
#include <string>

namespace fhmg {

/// Argument outside the mathematical domain of an operation (e.g. D_i <= 0, A < 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// X'V^{-1}X is numerically singular.
class SingularDesignError : public std::runtime_error {
 public:
  SingularDesignError(const std::string& what, double condition_number)
      : std::runtime_error(what), condition_number_(condition_number) {}
  double condition_number() const noexcept { return condition_number_; }

 private:
  double condition_number_;
};

/// An evaluator (user adjustment, likelihood, prior) produced NaN or +inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ImproperPosteriorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double achieved_tolerance)
      : std::runtime_error(what), achieved_tolerance_(achieved_tolerance) {}
  double achieved_tolerance() const noexcept { return achieved_tolerance_; }

 private:
  double achieved_tolerance_;
};

/// Malformed input file; line is 1-based (0 when not tied to a line).
class InputError : public std::runtime_error {
 public:
  InputError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace fhmg
