#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace subflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Overflow or NaN while integrating an ODE.
class NonFiniteState : public Error {
public:
    using Error::Error;
};

class MissingHint : public Error {
public:
    using Error::Error;
};

class UnknownSystem : public Error {
public:
    using Error::Error;
};

class MalformedPolynomial : public Error {
public:
    using Error::Error;
};

/// Flow step rejected more than max_rejects times in a row.
class StallError : public Error {
public:
    using Error::Error;
};

/// Eigensolver hit its iteration cap before the Ritz residuals settled.
class NoConvergence : public Error {
public:
    using Error::Error;
};

class InsufficientDecay : public Error {
public:
    using Error::Error;
};

class GridTooCoarse : public Error {
public:
    using Error::Error;
};

class SingularSolve : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Malformed JSON configuration.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed configuration with an invalid value. field() names the culprit.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error("invalid field '" + field + "': " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace subflow
