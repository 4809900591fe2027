#pragma once

#include <stdexcept>
#include <string>

namespace vmp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameter values outside a family's valid natural-parameter domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Overflow, failed factorization, non-finite results.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A value that lies outside a family's support.
class SupportError : public Error {
 public:
  using Error::Error;
};

class SlotMismatchError : public Error {
 public:
  using Error::Error;
};

class PlateMismatchError : public Error {
 public:
  using Error::Error;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

class ClusterSizeMismatchError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Front-end errors.
class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class RaggedRowError : public Error {
 public:
  using Error::Error;
};

class NonNumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace vmp
