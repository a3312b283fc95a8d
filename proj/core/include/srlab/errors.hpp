#pragma once

#include <stdexcept>
#include <string>

namespace srlab {

/// Prompt, response, or token index outside the policy's spaces.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Two objects that must share prompt/response spaces do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameters violate a construction invariant (non-normalized rows,
/// zero mass under strict positivity, bad trap parameters, ...).
class ConstructionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller-side precondition does not hold (n = 0, empty class, ...).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Margin requested on a response space with a single element.
class UndefinedMarginError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Sharpened linear-softmax parameter left the radius-B ball.
class OutOfClassError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Enumeration would exceed the desk-scale limits.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace srlab
