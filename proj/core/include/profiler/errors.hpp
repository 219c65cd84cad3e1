#pragma once

#include <stdexcept>
#include <string>

namespace profiler {

/// Malformed input data or bad arguments. The CLI maps this to exit code 2.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failure (divergence, non-finite values). The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace profiler
