#pragma once

#include <stdexcept>
#include <string>

namespace dano {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A size exceeds a configured hard cap (qubit count, oracle dimension).
class CapacityError : public Error {
public:
    using Error::Error;
};

/// A qubit index or window lies outside the register.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Array or matrix dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Argument values violate a precondition (non-finite angle, bad label, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `offset` is the byte position where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string &what, long long offset = -1)
        : Error(offset >= 0 ? what + " (at byte offset " + std::to_string(offset) + ")" : what),
          message_(what), offset_(offset) {}

    long long offset() const noexcept { return offset_; }
    /// The message without the offset suffix.
    const std::string &message() const noexcept { return message_; }

private:
    std::string message_;
    long long offset_;
};

/// An iterative numerical method failed to converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace dano
