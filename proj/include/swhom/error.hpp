#pragma once

#include <stdexcept>
#include <string>

namespace swhom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched sizes or dimensions between inputs.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A linear or eigen solve that failed or missed its tolerance.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Right-hand side of a cell problem is not orthogonal to the invariant density.
class CompatibilityError : public SolverError {
public:
    explicit CompatibilityError(const std::string& detail)
        : SolverError("Fredholm compatibility violated: " + detail) {}
};

/// Failure while integrating a sample path.
class SimulationError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace swhom
