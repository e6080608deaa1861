// Exception hierarchy shared by all fdpn modules.
//
// ValidationError and its children map to CLI exit code 2 (bad input or
// bad arguments); everything else maps to exit code 3 (runtime failure).

#pragma once

#include <stdexcept>
#include <string>

namespace fdpn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user input or violated call contracts.
struct ValidationError : Error {
    using Error::Error;
};

// Malformed text input (manifest rows, config lines). Message names the location.
struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

// Out-of-range or inconsistent arguments to an operation.
struct ArgumentError : ValidationError {
    using ValidationError::ValidationError;
};

// Tensor/array dimension mismatch.
struct ShapeError : ArgumentError {
    using ArgumentError::ArgumentError;
};

// Metric undefined for the given inputs (e.g. single-class labels).
struct MetricError : ValidationError {
    using ValidationError::ValidationError;
};

// Filesystem failures.
struct IoError : Error {
    using Error::Error;
};

// Corrupt or incompatible binary files (bad magic, version, truncation).
struct FormatError : IoError {
    using IoError::IoError;
};

// Training aborted (non-finite loss and friends).
struct TrainingError : Error {
    using Error::Error;
};

}  // namespace fdpn
