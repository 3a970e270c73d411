#pragma once

#include <stdexcept>
#include <string>

namespace mzqkd {

/// An input lies outside the mathematical domain of an operation
/// (negative rate, probability outside [0,1], super-quantum S, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A model description cannot be evaluated, e.g. a dwell-time distribution
/// that has no mass below the cutoff.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad parameter names, malformed configuration, invalid CLI input.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Not enough samples to form an estimate (empty CHSH cell, M_test = 0).
class InsufficientStatistics : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mzqkd
