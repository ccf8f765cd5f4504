#pragma once

#include <stdexcept>
#include <string>

namespace regroup {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments, inconsistent shapes, malformed file contents.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A computation produced NaN/Inf (forward pass, training divergence).
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace regroup
