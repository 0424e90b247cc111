#pragma once

#include <stdexcept>
#include <string>

namespace dynomap {

// Input/usage problems: bad files, mismatched shapes the caller controls,
// missing columns. CLI maps these to exit code 2.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures: non-finite values, degenerate denominators.
// CLI maps these to exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateVariance : NumericError {
    explicit DegenerateVariance(const std::string& msg) : NumericError(msg) {}
};

} // namespace dynomap
