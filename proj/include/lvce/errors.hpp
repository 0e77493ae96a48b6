#pragma once

#include <stdexcept>
#include <string>

namespace lvce {

// Error taxonomy used across the toolkit. Everything derives from
// std::runtime_error / std::invalid_argument so callers that do not care
// about the exact kind can catch the standard bases.

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Tensor / volume dimension incompatibilities.
struct ShapeError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

// Malformed or unsupported file contents (NIfTI headers, checkpoints, ...).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A region-producing operation found nothing to work with (e.g. empty mask).
struct EmptyRegionError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

// Joint intensity range collapsed to a point; normalization undefined.
struct DegenerateRangeError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct RegistrationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients during optimization.
struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A pipeline stage was invoked before its prerequisites completed.
struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lvce
