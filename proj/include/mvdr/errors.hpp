#pragma once

#include <stdexcept>
#include <string>

namespace mvdr {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, truncated or unsupported on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

/// Training set smaller than the number of centroids requested.
class TooFewPointsError : public Error {
 public:
  using Error::Error;
};

class CorruptCodeError : public Error {
 public:
  using Error::Error;
};

/// An operation that needs an order was applied to an unordered candidate set.
class NotRankableError : public Error {
 public:
  using Error::Error;
};

class DimError : public Error {
 public:
  using Error::Error;
};

/// A candidate references a document that the corpus does not contain.
class CorpusMismatchError : public Error {
 public:
  using Error::Error;
};

class PairingError : public Error {
 public:
  using Error::Error;
};

/// A statistic is not defined for the given input (e.g. fewer than two items).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvdr
