#pragma once

#include <stdexcept>
#include <string>

namespace tmseeg {

/// Broad failure classes; the CLI maps each to its exit code.
enum class ErrorKind {
  config,     // invalid parameters, geometry, ranges, usage (exit 2)
  numerical,  // conditioning, covariance, solver, degenerate data (exit 3)
  io,         // missing/unreadable/malformed files (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define TMSEEG_DEFINE_ERROR(Name, Kind)                                 \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

TMSEEG_DEFINE_ERROR(ConfigError, config)
TMSEEG_DEFINE_ERROR(GeometryError, config)
TMSEEG_DEFINE_ERROR(RangeError, config)
TMSEEG_DEFINE_ERROR(DimensionError, config)
TMSEEG_DEFINE_ERROR(ScenarioError, config)
TMSEEG_DEFINE_ERROR(TopologyError, config)
TMSEEG_DEFINE_ERROR(DomainError, config)
TMSEEG_DEFINE_ERROR(PlacementError, numerical)
TMSEEG_DEFINE_ERROR(CovarianceError, numerical)
TMSEEG_DEFINE_ERROR(ConditioningError, numerical)
TMSEEG_DEFINE_ERROR(NormalizationError, numerical)
TMSEEG_DEFINE_ERROR(SolverError, numerical)
TMSEEG_DEFINE_ERROR(DegenerateError, numerical)
TMSEEG_DEFINE_ERROR(InsufficientDataError, numerical)
TMSEEG_DEFINE_ERROR(IoError, io)

#undef TMSEEG_DEFINE_ERROR

}  // namespace tmseeg
