#pragma once

#include <stdexcept>
#include <string>

namespace emseg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad experiment configuration (unknown key, invalid value, fingerprint refusal).
struct ConfigError : Error {
    using Error::Error;
};

// Dataset layout / integrity problems (missing slice, shape mismatch, bad counts).
struct DataError : Error {
    using Error::Error;
};

// Tensor shape violations at module boundaries.
struct ShapeError : Error {
    using Error::Error;
};

// Non-finite loss, covariance failures and similar numerical aborts.
struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace emseg
