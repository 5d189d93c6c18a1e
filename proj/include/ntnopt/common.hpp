#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace ntnopt {

/// Speed of light [m/s], used by the free-space loss model.
inline constexpr double speed_of_light = 3.0e8;

inline constexpr double pi = 3.141592653589793238462643383279502884;

/// Power ratio conversions. dB values only appear at I/O boundaries;
/// everything internal is linear.
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

inline double sq(double x) { return x * x; }
inline double cube(double x) { return x * x * x; }

/// Configuration or input validation failure; message names the offending
/// field and the violated bound.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// A subproblem or pipeline step could not produce a feasible result.
/// Message carries context (which slot/node/constraint is binding).
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unexpected numerical failure (solver breakdown, singular system).
class SolveError : public std::runtime_error {
 public:
  explicit SolveError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ntnopt
