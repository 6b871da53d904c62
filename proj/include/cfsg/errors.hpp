#pragma once

#include <stdexcept>
#include <string>

namespace cfsg {

// Shapes disagree with an operation's contract.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input violates a documented precondition (bad ids, bad config, bad file).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A non-finite value showed up where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Object is not in a state that supports the request (e.g. uninitialized centroid).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rank correlation of a constant sequence.
class UndefinedCorrelationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Checkpoint / dataset file could not be read back.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfsg
