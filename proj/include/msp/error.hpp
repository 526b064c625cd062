#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace msp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A factorization hit a non-positive or ill-conditioned pivot.
class SingularityError : public Error {
public:
    SingularityError(const std::string& what, std::size_t pivot)
        : Error(what + " (pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}

    std::size_t pivot() const noexcept { return pivot_; }

private:
    std::size_t pivot_;
};

/// Non-finite values or an iterative solver that did not converge.
class NumericError : public Error {
public:
    using Error::Error;
};

/// API misuse: calling an operation outside its documented preconditions.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Configuration or spec validation failure; carries every violated field.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> fields)
        : Error(join(fields)), fields_(std::move(fields)) {}

    const std::vector<std::string>& fields() const noexcept { return fields_; }

private:
    static std::string join(const std::vector<std::string>& fields) {
        std::string out = "invalid configuration:";
        for (const auto& f : fields) out += " " + f + ";";
        return out;
    }

    std::vector<std::string> fields_;
};

/// A required input file is absent or empty.
class MissingInputError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss or gradient.
class TrainingAborted : public Error {
public:
    TrainingAborted(const std::string& what, std::size_t iteration)
        : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

}  // namespace msp
