#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace qpns {

inline std::string format_number(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments or violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Non-finite state encountered during time stepping.
class BlowUpError : public Error {
 public:
  BlowUpError(double time, const std::string& what)
      : Error(what + " (t = " + format_number(time) + ")"), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// An iterative solver or estimator did not reach its target.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual = " + format_number(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace qpns
