#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kktset {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind : std::uint8_t {
    validation,  // bad input: shapes, labels, preconditions, file contents
    numeric,     // a computation left the finite range or failed to converge
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A neuron with an all-zero weight row has no hyperplane.
class DegenerateNeuronError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InvalidMultiplierError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class MergeError : public ValidationError {
public:
    enum class Reason : std::uint8_t { label, pattern, multiplier };
    MergeError(Reason reason, const std::string& what) : ValidationError(what), reason_(reason) {}
    [[nodiscard]] Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

class SplitError : public ValidationError {
public:
    enum class Reason : std::uint8_t { pattern, classification, multiplier };
    SplitError(Reason reason, const std::string& what, long neuron = -1)
        : ValidationError(what), reason_(reason), neuron_(neuron) {}
    [[nodiscard]] Reason reason() const noexcept { return reason_; }
    /// First neuron whose activation bit differs; -1 when not a pattern failure.
    [[nodiscard]] long neuron() const noexcept { return neuron_; }

private:
    Reason reason_;
    long neuron_;
};

/// A point sits exactly on a neuron hyperplane, where the ReLU subgradient is set-valued.
class DegeneratePositionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// The data spans the whole input space, so no orthogonal direction exists.
class SubspaceError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DefenseTransformError : public NumericError {
public:
    using NumericError::NumericError;
};

class IoError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace kktset
