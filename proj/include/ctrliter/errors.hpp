#pragma once

#include <stdexcept>
#include <string>

namespace ctrliter {

/// Malformed or out-of-contract input (shapes, non-finite values, bad tags).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A documented precondition of a numerical method does not hold.
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A trajectory left the finite range.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, double time)
        : std::runtime_error(what), time_(time) {}

    /// Time at which the first non-finite state appeared.
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// A single step of an iteration could not be carried out (singular system,
/// non-finite objective, ...).
class StepError : public std::runtime_error {
public:
    StepError(const std::string& what, double smallest_singular_value = 0.0)
        : std::runtime_error(what), sigma_min_(smallest_singular_value) {}

    double smallest_singular_value() const noexcept { return sigma_min_; }

private:
    double sigma_min_;
};

}  // namespace ctrliter
