#pragma once

#include <stdexcept>
#include <string>

namespace fbsde {

/// Invalid scenario / model configuration (bad grid alignment, empty atom
/// list with positive intensity, ...). Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite value produced during a computation. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative scheme failed to reach tolerance. Maps to CLI exit code 4.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fbsde
