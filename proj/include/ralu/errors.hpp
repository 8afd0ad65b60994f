#pragma once

#include <stdexcept>
#include <string>

namespace ralu {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Array shapes or layouts that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition on object state.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Derived quantities disagree with each other (e.g. overlapping stage intervals).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ralu
