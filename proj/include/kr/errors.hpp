#pragma once

#include <stdexcept>
#include <string>

namespace kr {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed measure/map document. `where` is a JSON-pointer-like location.
class ParseError : public Error {
 public:
  ParseError(std::string where, const std::string& reason)
      : Error(where.empty() ? reason : where + ": " + reason),
        where_(std::move(where)),
        reason_(reason) {}

  const std::string& where() const noexcept { return where_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string where_;
  std::string reason_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotPiecewiseConstant : public Error {
 public:
  NotPiecewiseConstant() : Error("map has a segment with nonzero slope") {}
};

class Infeasible : public Error {
 public:
  using Error::Error;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class DegenerateExplosion : public Error {
 public:
  using Error::Error;
};

}  // namespace kr
