#pragma once

#include <stdexcept>
#include <string>

namespace coverhead {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input value outside the documented domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid configuration; the message names the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed file contents (bad magic, truncation, overflow, ...).
class ParseError : public Error {
public:
    using Error::Error;
};

// Non-finite values or degenerate denominators in numeric code.
class NumericError : public Error {
public:
    using Error::Error;
};

// Inconsistent dataset contents (missing annotations, registry mismatch, ...).
class DataError : public Error {
public:
    using Error::Error;
};

// Filesystem failures; the message carries the path.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace coverhead
