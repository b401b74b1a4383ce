#pragma once

#include <stdexcept>
#include <string>

namespace robustscaler {

/// Invalid user input: malformed files, out-of-range parameters, bad configs.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A well-formed request that cannot be carried out (horizon exhausted,
/// singular system, simulation fault).
class RuntimeFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when a query asks for intensity mass beyond the extrapolated horizon.
class HorizonExhausted : public RuntimeFault {
public:
    using RuntimeFault::RuntimeFault;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw InputError(what);
}

}  // namespace detail
}  // namespace robustscaler
