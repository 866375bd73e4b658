#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace quapi {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr Complex kI{0.0, 1.0};

/// Base of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Quadrature failed to reach its tolerance.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, long lag = -1)
        : Error(what), lag_(lag) {}
    /// Memory lag being integrated when the failure happened, or -1.
    long lag() const noexcept { return lag_; }

private:
    long lag_;
};

/// Failure during propagation (overflow guards, invalid stores, ...).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent configuration. Carries the 1-based line number
/// when the problem can be attributed to one.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Worker communication failure.
class TransportError : public Error {
public:
    using Error::Error;
};

}  // namespace quapi
