#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace blochopt {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: dimension mismatches, violated preconditions, bad configs.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// An iterative method (eigensolver, bisection, linear solver) failed to converge.
class ConvergenceError : public Error {
  public:
    using Error::Error;
};

/// A problem instance is outside the regime where it is well posed
/// (e.g. an effective model requested above its epsilon threshold).
class IllPosedError : public Error {
  public:
    using Error::Error;
};

/// A runtime certificate (bound, slackness, symmetry) was violated. Signals a bug.
class InvariantViolation : public Error {
  public:
    using Error::Error;
};

/// Number of worker threads used by parallel loops. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(i) for i in [0, n). Iterations must be independent; results are
/// identical for any thread count. Calls made from inside a worker run inline.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace blochopt
