#pragma once

#include <stdexcept>
#include <string>

namespace lapdae {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / axis mismatches. Messages name the offending axes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid configuration (bad layer chain, bad config keys, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class DataErrorCode {
    BadMagic,
    Truncated,
    CountMismatch,
    MissingFile,
};

// Dataset ingestion failures, with a machine-checkable code.
class DataError : public Error {
public:
    DataError(DataErrorCode code, const std::string& msg) : Error(msg), code_(code) {}
    DataErrorCode code() const { return code_; }

private:
    DataErrorCode code_;
};

// Filesystem / stream failures outside dataset parsing.
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required (NaN gradients, diverged loss).
class NumericError : public Error {
public:
    using Error::Error;
};

// API misuse: unknown metric names, out-of-range levels, k too large, ...
class UsageError : public Error {
public:
    using Error::Error;
};

// Process exit codes used by the CLI. 0 = success.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitData = 3,
    kExitIo = 4,
    kExitNumeric = 5,
};

} // namespace lapdae
