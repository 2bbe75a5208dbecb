#pragma once

#include <stdexcept>
#include <string>

namespace scoreag {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or an operation applied to the wrong rank.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Rejected values: NaN/Inf on construction, out-of-range parameters.
class ValueError : public Error {
public:
    using Error::Error;
};

/// Violated operation precondition (non-scalar backward seed, t outside [0,1], ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Non-finite intermediate produced during graph evaluation.
class OverflowError : public Error {
public:
    OverflowError(const std::string& msg, int node = -1) : Error(msg), node_index(node) {}
    int node_index;
};

/// Numerical blow-up in an iterative process (sampling, training).
class DivergedError : public Error {
public:
    DivergedError(const std::string& msg, int step = -1) : Error(msg), step(step) {}
    int step;
};

/// File-level I/O failure.
class IoError : public Error {
public:
    using Error::Error;
};

class IdxBadMagicError : public IoError {
public:
    using IoError::IoError;
};

class IdxUnsupportedTypeError : public IoError {
public:
    using IoError::IoError;
};

class IdxTruncatedError : public IoError {
public:
    using IoError::IoError;
};

/// Bad run configuration: unknown keys, missing files, invalid values.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace scoreag
