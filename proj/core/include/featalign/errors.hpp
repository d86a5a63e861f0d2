#pragma once

#include <stdexcept>
#include <string>

namespace featalign {

// Base class for all recoverable errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// No observation survived projection/border/validity checks.
class NoValidObservations : public Error {
 public:
  explicit NoValidObservations(const std::string& msg = "no valid observations")
      : Error(msg) {}
};

// The damped normal equations could not be factorized.
class SingularSystem : public Error {
 public:
  explicit SingularSystem(const std::string& msg = "singular linear system")
      : Error(msg) {}
};

// Every stage of the coarse-to-fine schedule was skipped.
class InitializationFailed : public Error {
 public:
  explicit InitializationFailed(const std::string& msg = "initialization failed")
      : Error(msg) {}
};

// Reference aggregation produced an empty point set.
class EmptyModel : public Error {
 public:
  explicit EmptyModel(const std::string& msg = "no point survived aggregation")
      : Error(msg) {}
};

// No point is visible under the poses involved in a reprojection metric.
class NoVisiblePoints : public Error {
 public:
  explicit NoVisiblePoints(const std::string& msg = "no visible points")
      : Error(msg) {}
};

// Rotation averaging hit an eigenvalue tie (antipodal candidates).
class DegenerateRotationSet : public Error {
 public:
  explicit DegenerateRotationSet(const std::string& msg = "degenerate rotation set")
      : Error(msg) {}
};

// Scene generation cannot satisfy the requested spec.
class InfeasibleSpec : public Error {
 public:
  explicit InfeasibleSpec(const std::string& msg = "infeasible scene spec")
      : Error(msg) {}
};

// Basin analysis seed lies outside the valid border region.
class SeedOutOfBounds : public Error {
 public:
  explicit SeedOutOfBounds(const std::string& msg = "seed out of bounds")
      : Error(msg) {}
};

// Malformed or inconsistent input file.
class InputError : public Error {
 public:
  explicit InputError(const std::string& msg) : Error(msg) {}
};

}  // namespace featalign
