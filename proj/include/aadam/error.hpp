#pragma once

#include <stdexcept>
#include <string>

namespace aadam {

// Exception taxonomy. Each family maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files, violated data preconditions, bad shapes.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in values, losses or optimizer updates.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of an API or command line (bad config, unmet preconditions).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Transfer from a task adapter whose training history leaks into the target.
class LeakageError : public Error {
 public:
  using Error::Error;
};

/// Translation backend failure after retries.
class TranslationError : public Error {
 public:
  using Error::Error;
};

}  // namespace aadam
