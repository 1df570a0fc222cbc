#pragma once

#include <stdexcept>
#include <string>

namespace wdd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnreadableSourceError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

class DegenerateConfigurationError : public Error {
public:
    using Error::Error;
};

class OrderError : public Error {
public:
    using Error::Error;
};

class FramesUnavailableError : public Error {
public:
    using Error::Error;
};

class NoSignalError : public Error {
public:
    using Error::Error;
};

class UnresolvedDirectionError : public Error {
public:
    using Error::Error;
};

class UndefinedMeanError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class DatasetError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration. `field()` holds the dotted path of the offending entry.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace wdd
