#pragma once

#include <stdexcept>
#include <string>

namespace bcrn {

/// A precondition of an operation was violated by the caller
/// (infeasible action, dimension mismatch, out-of-range index).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid configuration value or malformed config file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An enumeration (action catalog, explicit MDP) exceeded its size cap.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite value encountered during training.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace bcrn
