#pragma once

#include <stdexcept>
#include <string>

namespace dssm {

// Bad configuration: unknown keys, invalid schema, mismatched checkpoint/config.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or insufficient input data: parse failures, empty splits, short series.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension mismatch between arrays.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: division by zero, non-finite values, divergence.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace dssm
