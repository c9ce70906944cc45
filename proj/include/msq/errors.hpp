#pragma once

#include <stdexcept>
#include <string>

namespace msq {

// Category of a failure; the CLI maps it to an exit code.
enum class ErrorKind { validation, numeric, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Invalid argument or precondition violation.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

// Data whose quantile spread vanishes.
class DegenerateInput : public Error {
public:
    explicit DegenerateInput(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

// Singular D'WD in the sandwich covariance. Carries the offending parameter name.
class RankDeficiency : public Error {
public:
    RankDeficiency(const std::string& parameter, const std::string& what)
        : Error(ErrorKind::numeric, what), parameter_(parameter) {}
    const std::string& parameter() const noexcept { return parameter_; }

private:
    std::string parameter_;
};

// Too few Monte Carlo rows satisfy a conditioning event.
class InsufficientConditioning : public Error {
public:
    explicit InsufficientConditioning(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace msq
