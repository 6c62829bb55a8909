#pragma once

#include <stdexcept>
#include <string>

namespace kinetica {

/// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file header or payload.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Value violates a type invariant (NaN, negative activity, bad schedule, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Operand shapes or grids disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Function evaluated outside the range its data covers.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Singular fits, undefined likelihoods, divergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Emit a warning line on stderr. Library code never prints anything else.
void warn(const std::string& message);

}  // namespace kinetica
