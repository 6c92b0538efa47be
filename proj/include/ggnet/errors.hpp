#pragma once

#include <stdexcept>
#include <string>

namespace ggnet {

/// Tensor shapes that cannot be combined by an operation.
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration that describes an impossible layer or model.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Annotations, tables or files that violate their format or invariants.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or inputs outside a function's numeric domain.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ggnet
