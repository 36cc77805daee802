#pragma once

#include <stdexcept>
#include <string>

namespace gsde {

/// Precondition or shape violation detected at an API boundary.
class ContractViolation : public std::invalid_argument {
public:
    explicit ContractViolation(const std::string& what)
        : std::invalid_argument(what) {}
};

/// Bad experiment configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what)
        : std::runtime_error(what) {}
};

/// A numerical sweep produced NaN or Inf.
class NonFiniteError : public std::runtime_error {
public:
    explicit NonFiniteError(const std::string& what)
        : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ContractViolation(message);
    }
}

}  // namespace gsde
