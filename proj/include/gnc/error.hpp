#pragma once

#include <stdexcept>
#include <string>

namespace gnc {

// Bad input: shapes, ranges, malformed files. CLI exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Solver breakdown or degenerate numerics. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

} // namespace detail
} // namespace gnc
