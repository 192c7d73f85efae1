#pragma once

#include <stdexcept>
#include <string>

namespace mclp {

// Error taxonomy. Every failure mode raised by the library is one of these,
// so callers (and the CLI exit-code mapping) can tell misuse apart from
// runtime trouble.

// Malformed shapes, rank mismatches, empty axes.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf encountered, or a quantity left its valid numeric range.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration: invalid field values, unknown keys, impossible grids.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Caller broke an API contract (backward on a non-scalar, missing gradient).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// File system and parse failures; message always carries the path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Bad input data (too-short clip, empty split, unmet preconditions on data).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mclp
