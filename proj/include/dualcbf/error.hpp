#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dualcbf {

/// Base of every domain error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class InvalidArchitecture : public Error {
public:
    using Error::Error;
};

/// Raised when a second-order pass meets an activation that is not twice differentiable.
class NonSmoothActivation : public Error {
public:
    using Error::Error;
};

class MissingJacobian : public Error {
public:
    using Error::Error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class InvalidIdentifier : public Error {
public:
    using Error::Error;
};

/// Model document errors. `line` and `column` are 1-based; 0 means unknown.
class ModelError : public Error {
public:
    ModelError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
        : Error(what), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class SyntaxError : public ModelError {
public:
    using ModelError::ModelError;
};

class ShapeError : public ModelError {
public:
    using ModelError::ModelError;
};

class UnknownActivation : public ModelError {
public:
    using ModelError::ModelError;
};

class NonFiniteWeight : public ModelError {
public:
    using ModelError::ModelError;
};

/// The safety QP has no solution. `time` is set when raised from inside a simulation.
class Infeasible : public Error {
public:
    explicit Infeasible(const std::string& what, double time = -1.0) : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

class NumericalBlowup : public Error {
public:
    NumericalBlowup(const std::string& what, double time) : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Instrumented operation count disagrees with the closed-form cost model.
class CountMismatch : public Error {
public:
    CountMismatch(const std::string& quantity, std::uint64_t expected, std::uint64_t measured,
                  int first_divergent_layer = 0)
        : Error(quantity + ": closed form " + std::to_string(expected) + ", measured " +
                std::to_string(measured) +
                (first_divergent_layer > 0
                     ? " (first divergent layer " + std::to_string(first_divergent_layer) + ")"
                     : std::string())),
          quantity_(quantity),
          expected_(expected),
          measured_(measured),
          layer_(first_divergent_layer) {}

    const std::string& quantity() const noexcept { return quantity_; }
    std::uint64_t expected() const noexcept { return expected_; }
    std::uint64_t measured() const noexcept { return measured_; }
    int first_divergent_layer() const noexcept { return layer_; }

private:
    std::string quantity_;
    std::uint64_t expected_;
    std::uint64_t measured_;
    int layer_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace dualcbf
