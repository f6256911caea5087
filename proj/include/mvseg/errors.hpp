#pragma once

#include <stdexcept>
#include <string>

namespace mvseg {

// Base for all library-defined failures. std::invalid_argument is used
// directly for malformed call arguments (bad shapes, indivisible batches).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent or unsupported configuration (dims not divisible, bad toggles).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Dataset / file-level problems: missing masks, unreadable images,
// checkpoint corruption. Maps to CLI exit code 2.
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Non-finite losses or other numeric breakdown. Maps to CLI exit code 3.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace mvseg
