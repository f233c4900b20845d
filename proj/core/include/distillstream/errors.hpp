#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace distillstream {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input that does not follow a file schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

// A single malformed line of a JSON-Lines file.
class RecordError : public SchemaError {
public:
    RecordError(std::size_t line, const std::string& what)
        : SchemaError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// Argument outside an operation's mathematical domain (zero-norm vectors, NaN).
class DomainError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace distillstream
