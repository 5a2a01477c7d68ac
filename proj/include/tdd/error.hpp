#pragma once

#include <stdexcept>
#include <string>

namespace tdd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation
/// (negative lag, lower half-plane frequency, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Evaluation at a pole of a transform, e.g. the constant kernel at zero frequency.
class PoleError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation does not hold
/// (CFL bound, grid mismatch, insufficient history, failed dissipation check).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Scenario / model configuration problems. Carries the offending line when known.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line + 1) + ": " + what : what),
          line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace tdd
