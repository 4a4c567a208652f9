#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace relgraph {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad shapes, unknown ids, self/duplicate edges, parse errors.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A graph that was required to be acyclic is not.
class CycleError : public ValidationError {
 public:
  CycleError(const std::string& what, std::vector<int> cycle)
      : ValidationError(what), cycle_(std::move(cycle)) {}
  const std::vector<int>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<int> cycle_;
};

// Non-finite values produced inside a numeric routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : NumericalError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace relgraph
