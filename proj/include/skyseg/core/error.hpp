#pragma once

#include <stdexcept>
#include <string>

namespace skyseg {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. The message names the file and line when known.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Physically meaningless or out-of-range numeric input.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or missing configuration (hyperparameters, channels, flags).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Data that loaded fine but violates a dataset-level invariant.
class DataError : public Error {
public:
    using Error::Error;
};

/// A fitting routine failed in a way the caller cannot recover from.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace skyseg
