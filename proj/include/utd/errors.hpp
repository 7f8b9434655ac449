#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace utd {

/// Base of every error the library raises. `category()` is a short stable tag
/// used by the CLI as a machine-parsable diagnostic prefix.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* category() const noexcept { return "error"; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "shape"; }
};

class InvalidArgument : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "invalid-argument"; }
};

class DivergedError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "diverged"; }
};

class EmptyClassError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "empty-class"; }
};

class CapabilityError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "capability"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "io"; }
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    const char* category() const noexcept override { return "parse"; }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace utd
