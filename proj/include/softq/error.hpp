#pragma once

#include <stdexcept>
#include <string>

namespace softq {

/// Bad arguments: shape mismatch, non-finite input, violated precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Calling an operation in a state that forbids it (e.g. stepping a finished episode).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN or Inf showed up in a quantity that must stay finite.
class NumericAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidInput(message);
}

}  // namespace softq
