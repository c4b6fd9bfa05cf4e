#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace softarm {

// Error categories map onto CLI exit codes (see tools/softarm.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Every problem found while validating a scenario, each prefixed with the
/// field path ("arm.n_elements: must be >= 2").
class ValidationError : public ConfigurationError {
public:
    explicit ValidationError(std::vector<std::string> issues)
        : ConfigurationError(join(issues)), issues_(std::move(issues)) {}
    const std::vector<std::string>& issues() const { return issues_; }

private:
    static std::string join(const std::vector<std::string>& issues)
    {
        std::string out = "scenario validation failed:";
        for (const auto& i : issues) out += "\n  " + i;
        return out;
    }
    std::vector<std::string> issues_;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class InvalidRotationError : public DomainError {
public:
    using DomainError::DomainError;
};

class DegenerateError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& field, const std::string& what)
        : Error(what), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ActuationLimitError : public Error {
public:
    using Error::Error;
};

/// More than one consistent marker assignment.
class AmbiguityError : public Error {
public:
    using Error::Error;
};

/// Soft diagnostics that do not stop a run: clamped inputs, calibration
/// values outside the usual range, capped contact forces.
struct WarningLog {
    std::vector<std::string> messages;

    void add(std::string message) { messages.push_back(std::move(message)); }
    bool empty() const { return messages.empty(); }
    std::size_t size() const { return messages.size(); }
};

}  // namespace softarm
