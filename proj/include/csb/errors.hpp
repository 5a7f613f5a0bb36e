#pragma once

#include <stdexcept>
#include <string>

namespace csb {

// Error taxonomy shared by every module. All of these derive from
// std::runtime_error so callers can catch broadly; names match the
// condition they report.

struct CycleDetected : std::runtime_error {
  explicit CycleDetected(const std::string& what) : std::runtime_error(what) {}
};

struct UnknownNode : std::runtime_error {
  explicit UnknownNode(const std::string& what) : std::runtime_error(what) {}
};

struct NonPositiveStd : std::runtime_error {
  explicit NonPositiveStd(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteLoss : std::runtime_error {
  explicit NonFiniteLoss(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteState : std::runtime_error {
  NonFiniteState(const std::string& what, int step) : std::runtime_error(what), step_index(step) {}
  int step_index;
};

struct EmptyProtectedSet : std::runtime_error {
  explicit EmptyProtectedSet(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateTarget : std::runtime_error {
  explicit DegenerateTarget(const std::string& what) : std::runtime_error(what) {}
};

struct SingularMatrix : std::runtime_error {
  explicit SingularMatrix(const std::string& what) : std::runtime_error(what) {}
};

struct UnfittedModel : std::runtime_error {
  explicit UnfittedModel(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace csb
