#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pguide {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Out-of-range argument or an ill-posed closed form (e.g. non-positive precision).
class DomainError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Raised when optimization produces a non-finite loss or gradient. Carries the
// loss history up to the failure so callers can inspect the divergence.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::vector<double> history = {})
        : Error(what), history_(std::move(history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

class SamplingError : public Error {
public:
    SamplingError(const std::string& what, int step) : Error(what), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

}  // namespace pguide
