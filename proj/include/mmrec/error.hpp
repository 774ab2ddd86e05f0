#pragma once

#include <stdexcept>
#include <string>

namespace mmrec {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or index mismatch between tensors, graphs, or files.
struct ShapeError : Error {
    using Error::Error;
};

// Unreadable or malformed text input (carries a line number in the message).
struct ParseError : Error {
    using Error::Error;
};

// Structurally valid input with unusable content (non-finite values, empty corpus).
struct DataError : Error {
    using Error::Error;
};

// Bad magic, version, or truncation in a binary file.
struct FormatError : Error {
    using Error::Error;
};

// Violation of the train/test protocol preconditions.
struct ProtocolError : Error {
    using Error::Error;
};

// Negative sampling cannot proceed (no eligible items).
struct SamplingError : Error {
    using Error::Error;
};

// Non-finite values where finite arithmetic is required.
struct NumericError : Error {
    using Error::Error;
};

// Inconsistent or invalid configuration.
struct ConfigError : Error {
    using Error::Error;
};

// File system failure.
struct IoError : Error {
    using Error::Error;
};

// Bad command-line usage; maps to exit code 2 at the CLI boundary.
struct UsageError : Error {
    using Error::Error;
};

}  // namespace mmrec
