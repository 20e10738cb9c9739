#pragma once

#include <stdexcept>
#include <string>

namespace mixlrt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside the parameter box, or a rate is non-positive.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed observation, measure, or argument.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical integral could not be resolved to the requested accuracy.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// A Gram/moment matrix is numerically singular at the given polynomial order.
class RankError : public Error {
 public:
  RankError(const std::string& what, int order) : Error(what), order_(order) {}
  int order() const { return order_; }

 private:
  int order_;
};

/// The alternative is indistinguishable from the null (chi below threshold).
class DegenerateDirectionError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, including polynomial order overflow.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed JSON/CSV input. `field` names the offending key when known.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::string field = {}, int line = 0)
      : ConfigError(what), field_(std::move(field)), line_(line) {}
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixlrt
