#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cgfb {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: model files, window sizes, experiment specs. The CLI maps
/// these to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A numerical precondition failed during a computation. The CLI maps these
/// to exit code 3. `step()` is the zero-based timestep when one applies.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, std::optional<std::size_t> step = std::nullopt)
        : Error(step ? what + " (t=" + std::to_string(*step + 1) + ")" : what), step_(step) {}

    [[nodiscard]] std::optional<std::size_t> step() const noexcept { return step_; }

private:
    std::optional<std::size_t> step_;
};

class DimensionMismatch : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class NotSymmetric : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NotPositiveDefinite : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Eigenvalue more negative than the PSD repair tolerance.
class NotPositiveSemidefinite : public NumericalError {
public:
    NotPositiveSemidefinite(const std::string& what, double min_eigenvalue)
        : NumericalError(what + " (min eigenvalue " + std::to_string(min_eigenvalue) + ")"),
          min_eigenvalue_(min_eigenvalue) {}

    [[nodiscard]] double min_eigenvalue() const noexcept { return min_eigenvalue_; }

private:
    double min_eigenvalue_;
};

struct ModelViolation {
    std::string field;
    std::string reason;
};

/// Every invariant violated by a model, not only the first.
class InvalidModel : public ConfigError {
public:
    explicit InvalidModel(std::vector<ModelViolation> violations)
        : ConfigError(format(violations)), violations_(std::move(violations)) {}

    [[nodiscard]] const std::vector<ModelViolation>& violations() const noexcept { return violations_; }

private:
    static std::string format(const std::vector<ModelViolation>& v) {
        std::string s = "invalid model:";
        for (const auto& e : v) s += " [" + e.field + ": " + e.reason + "]";
        return s;
    }

    std::vector<ModelViolation> violations_;
};

/// Malformed model file. `field()` names the offending key.
class ModelParseError : public ConfigError {
public:
    ModelParseError(std::string field, const std::string& reason)
        : ConfigError("model file field '" + field + "': " + reason), field_(std::move(field)) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class InvalidWindow : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class LengthMismatch : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DimensionCapExceeded : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DegenerateAggregate : public NumericalError {
public:
    explicit DegenerateAggregate(std::size_t t)
        : NumericalError("fitted aggregate covariance is not repairable to SPD", t) {}
};

/// An inner matrix of a message update (the product-message precision plus
/// the transition or observation term) failed to factor.
class SingularInnerMatrix : public NumericalError {
public:
    SingularInnerMatrix(const std::string& message_kind, std::size_t t)
        : NumericalError("singular inner matrix in " + message_kind + " update", t) {}
};

/// R^-1 + Phat^-1 - Lambda_d is not positive definite even after jitter.
class IndefiniteDeficit : public NumericalError {
public:
    IndefiniteDeficit(std::size_t t, double min_eigenvalue)
        : NumericalError("upward update: R^-1 + Phat^-1 - Lambda_d not positive definite (min eigenvalue " +
                             std::to_string(min_eigenvalue) + ")",
                         t),
          min_eigenvalue_(min_eigenvalue) {}

    [[nodiscard]] double min_eigenvalue() const noexcept { return min_eigenvalue_; }

private:
    double min_eigenvalue_;
};

class SingularInnovation : public NumericalError {
public:
    explicit SingularInnovation(std::optional<std::size_t> t = std::nullopt)
        : NumericalError("innovation covariance R + C P C^T is not positive definite", t) {}
};

} // namespace cgfb
