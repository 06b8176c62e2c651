#pragma once

#include <stdexcept>
#include <string>

namespace gtcs {

struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Generation could not satisfy the requested constraints within the retry budget.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
  SolverError(const std::string& msg, double gap) : std::runtime_error(msg), kkt_gap(gap) {}
  double kkt_gap;
};

}  // namespace gtcs
