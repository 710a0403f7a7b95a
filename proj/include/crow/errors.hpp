#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. `offset` is the byte position reported by the parser.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A record refers to an id that does not exist.
class ReferenceError : public Error {
public:
    using Error::Error;
};

/// A value violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A function was called with arguments outside its precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace crow
