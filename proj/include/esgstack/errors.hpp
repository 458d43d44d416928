#pragma once

#include <stdexcept>
#include <string>

namespace esgstack {

// Raised when user-supplied input (files, config, CLI arguments) violates a
// documented contract. The CLI maps this to exit code 2; everything else that
// escapes maps to exit code 1.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a numeric routine cannot produce a valid result (non-finite
// values, iteration budget exhausted).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace esgstack
